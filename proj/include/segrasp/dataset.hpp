#pragma once
// On-disk vision sets: one PPM/PGM pair per sample plus a manifest carrying
// the generation metadata, so a directory round-trips to the exact in-memory
// set (images are stored quantized in both places).

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "segrasp/csv.hpp"
#include "segrasp/vision.hpp"

namespace segrasp {

namespace detail {

inline std::string sample_tag(size_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 5) s.insert(s.begin(), '0');
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t at = 0;
  while (true) {
    const size_t comma = line.find(',', at);
    if (comma == std::string::npos) {
      out.push_back(line.substr(at));
      return out;
    }
    out.push_back(line.substr(at, comma - at));
    at = comma + 1;
  }
}

inline double manifest_double(const std::string& s, const std::string& path) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw IoError("bad number '" + s + "' in " + path);
  return v;
}

inline uint64_t manifest_u64(const std::string& s, const std::string& path) {
  uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw IoError("bad integer '" + s + "' in " + path);
  return v;
}

}  // namespace detail

inline constexpr char kManifestHeader[] =
    "index,image,mask,seed,has_sphere,sphere_cam_x,sphere_cam_y,sphere_cam_z,"
    "jitter_h,jitter_s,jitter_v";

inline void save_vision_set(const VisionSet& set, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  CsvWriter manifest((fs::path(dir) / "manifest.csv").string());
  manifest.cell(kManifestHeader);
  manifest.end_row();
  for (size_t i = 0; i < set.size(); i++) {
    const VisionSample& s = set[i];
    const std::string img = "img_" + detail::sample_tag(i) + ".ppm";
    const std::string mask = "mask_" + detail::sample_tag(i) + ".pgm";
    write_ppm((fs::path(dir) / img).string(), s.image);
    write_pgm((fs::path(dir) / mask).string(), s.truth);
    manifest.row(static_cast<int64_t>(i), img, mask, s.seed, static_cast<int64_t>(s.has_sphere),
                 s.sphere_cam.x, s.sphere_cam.y, s.sphere_cam.z, s.jitter.dh, s.jitter.ds,
                 s.jitter.dv);
  }
  manifest.flush();
}

inline VisionSet load_vision_set(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string mpath = (fs::path(dir) / "manifest.csv").string();
  std::ifstream f(mpath);
  if (!f) throw IoError("cannot open: " + mpath);
  std::string line;
  if (!std::getline(f, line) || line != kManifestHeader)
    throw IoError("unrecognized manifest header in " + mpath);
  VisionSet set;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> c = detail::split_csv_line(line);
    if (c.size() != 11) throw IoError("manifest row with " + std::to_string(c.size()) +
                                      " fields in " + mpath);
    if (detail::manifest_u64(c[0], mpath) != set.size())
      throw IoError("manifest rows out of order in " + mpath);
    VisionSample s;
    s.image = read_ppm8((fs::path(dir) / c[1]).string());
    s.truth = read_pgm((fs::path(dir) / c[2]).string());
    s.seed = detail::manifest_u64(c[3], mpath);
    s.has_sphere = detail::manifest_u64(c[4], mpath) != 0;
    s.sphere_cam = {detail::manifest_double(c[5], mpath), detail::manifest_double(c[6], mpath),
                    detail::manifest_double(c[7], mpath)};
    s.jitter = {detail::manifest_double(c[8], mpath), detail::manifest_double(c[9], mpath),
                detail::manifest_double(c[10], mpath)};
    set.push_back(std::move(s));
  }
  return set;
}

}  // namespace segrasp
