#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace segrasp {

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary image, row-major, top-left origin, entries 0/1.
struct Bitmap {
  int w = 0, h = 0;
  std::vector<uint8_t> v;

  Bitmap() = default;
  Bitmap(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0) {}
  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  size_t count() const {
    size_t n = 0;
    for (uint8_t b : v) n += b;
    return n;
  }
  bool operator==(const Bitmap& o) const { return w == o.w && h == o.h && v == o.v; }
};

// The vision/control interface mask is a 100x100 Bitmap.
using SegMask = Bitmap;
inline constexpr int kMaskSize = 100;

// RGB image, channels interleaved, values in [0,1], row-major, top-left origin.
struct RgbImage {
  int w = 0, h = 0;
  std::vector<float> v;  // 3*w*h

  RgbImage() = default;
  RgbImage(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_ * 3, 0.f) {}
  float* px(int y, int x) { return &v[(static_cast<size_t>(y) * w + x) * 3]; }
  const float* px(int y, int x) const { return &v[(static_cast<size_t>(y) * w + x) * 3]; }
  bool operator==(const RgbImage& o) const { return w == o.w && h == o.h && v == o.v; }
};

// Quantized RGB (what a PPM file holds); dataset storage so a 2k-image set
// stays under a few hundred MB and survives a disk round trip bit-identically.
struct Rgb8Image {
  int w = 0, h = 0;
  std::vector<uint8_t> v;  // 3*w*h interleaved

  Rgb8Image() = default;
  Rgb8Image(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_ * 3, 0) {}
  bool operator==(const Rgb8Image& o) const { return w == o.w && h == o.h && v == o.v; }
};

// ---- HSV (hexcone model). h in degrees [0,360), s,v in [0,1].

struct Hsv {
  double h = 0, s = 0, v = 0;
};

inline Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx <= 0 ? 0 : d / mx;
  if (d <= 0) {
    out.h = 0;
  } else if (mx == r) {
    out.h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  } else if (mx == g) {
    out.h = 60.0 * ((b - r) / d + 2.0);
  } else {
    out.h = 60.0 * ((r - g) / d + 4.0);
  }
  return out;
}

inline void hsv_to_rgb(const Hsv& in, double& r, double& g, double& b) {
  const double c = in.v * in.s;
  const double hp = std::fmod(std::fmod(in.h, 360.0) + 360.0, 360.0) / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp)) {
    case 0: r1 = c; g1 = x; break;
    case 1: r1 = x; g1 = c; break;
    case 2: g1 = c; b1 = x; break;
    case 3: g1 = x; b1 = c; break;
    case 4: r1 = x; b1 = c; break;
    default: r1 = c; b1 = x; break;
  }
  const double m = in.v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

// hue interval test with wrap-around (lo > hi means the band crosses 0)
inline bool hue_in_band(double h, double lo, double hi) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  if (lo <= hi) return h >= lo && h <= hi;
  return h >= lo || h <= hi;
}

// ---- PGM/PPM, binary variants (P5/P6), row-major, top-left origin.

inline void write_pgm(const std::string& path, const Bitmap& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open for write: " + path);
  f << "P5\n" << m.w << " " << m.h << "\n255\n";
  std::vector<uint8_t> row(m.w);
  for (int y = 0; y < m.h; y++) {
    for (int x = 0; x < m.w; x++) row[x] = m.at(y, x) ? 255 : 0;
    f.write(reinterpret_cast<const char*>(row.data()), m.w);
  }
  if (!f) throw ImageError("write failed: " + path);
}

namespace detail {
inline int pnm_int(std::istream& f) {
  // skips whitespace and '#' comments
  int c = f.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = f.get();
    c = f.get();
  }
  int val = 0;
  bool any = false;
  while (std::isdigit(c)) {
    val = val * 10 + (c - '0');
    any = true;
    c = f.get();
  }
  if (!any) throw ImageError("malformed PNM header");
  return val;
}
}  // namespace detail

inline Bitmap read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open: " + path);
  char p, five;
  f.get(p);
  f.get(five);
  if (p != 'P' || five != '5') throw ImageError("not a binary PGM: " + path);
  int w = detail::pnm_int(f), h = detail::pnm_int(f), maxv = detail::pnm_int(f);
  if (maxv != 255) throw ImageError("unsupported PGM maxval: " + path);
  Bitmap m(w, h);
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (static_cast<size_t>(f.gcount()) != buf.size()) throw ImageError("truncated PGM: " + path);
  for (size_t i = 0; i < buf.size(); i++) m.v[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

inline uint8_t to_u8(float x) {
  const float c = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
  return static_cast<uint8_t>(std::lround(c * 255.f));
}

inline Rgb8Image quantize_rgb(const RgbImage& f) {
  Rgb8Image q(f.w, f.h);
  for (size_t i = 0; i < f.v.size(); i++) q.v[i] = to_u8(f.v[i]);
  return q;
}

inline RgbImage dequantize_rgb(const Rgb8Image& q) {
  RgbImage f(q.w, q.h);
  for (size_t i = 0; i < q.v.size(); i++) f.v[i] = q.v[i] / 255.f;
  return f;
}

inline void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open for write: " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> buf(img.v.size());
  for (size_t i = 0; i < img.v.size(); i++) buf[i] = to_u8(img.v[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  if (!f) throw ImageError("write failed: " + path);
}

inline void write_ppm(const std::string& path, const Rgb8Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open for write: " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.v.data()), img.v.size());
  if (!f) throw ImageError("write failed: " + path);
}

inline Rgb8Image read_ppm8(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open: " + path);
  char p, six;
  f.get(p);
  f.get(six);
  if (p != 'P' || six != '6') throw ImageError("not a binary PPM: " + path);
  int w = detail::pnm_int(f), h = detail::pnm_int(f), maxv = detail::pnm_int(f);
  if (maxv != 255) throw ImageError("unsupported PPM maxval: " + path);
  Rgb8Image img(w, h);
  f.read(reinterpret_cast<char*>(img.v.data()), img.v.size());
  if (static_cast<size_t>(f.gcount()) != img.v.size()) throw ImageError("truncated PPM: " + path);
  return img;
}

inline RgbImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open: " + path);
  char p, six;
  f.get(p);
  f.get(six);
  if (p != 'P' || six != '6') throw ImageError("not a binary PPM: " + path);
  int w = detail::pnm_int(f), h = detail::pnm_int(f), maxv = detail::pnm_int(f);
  if (maxv != 255) throw ImageError("unsupported PPM maxval: " + path);
  RgbImage img(w, h);
  std::vector<uint8_t> buf(img.v.size());
  f.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (static_cast<size_t>(f.gcount()) != buf.size()) throw ImageError("truncated PPM: " + path);
  for (size_t i = 0; i < buf.size(); i++) img.v[i] = buf[i] / 255.f;
  return img;
}

// 4x4 (or any integer factor) majority pooling of a binary map; ties go to 1.
inline Bitmap majority_pool(const Bitmap& in, int out_w, int out_h) {
  if (in.w % out_w != 0 || in.h % out_h != 0)
    throw ImageError("majority_pool: size not an integer multiple");
  const int fx = in.w / out_w, fy = in.h / out_h;
  const int half = fx * fy;  // compare 2*sum against fx*fy*... see below
  Bitmap out(out_w, out_h);
  for (int y = 0; y < out_h; y++)
    for (int x = 0; x < out_w; x++) {
      int s = 0;
      for (int dy = 0; dy < fy; dy++)
        for (int dx = 0; dx < fx; dx++) s += in.at(y * fy + dy, x * fx + dx);
      out.at(y, x) = (2 * s >= half) ? 1 : 0;
    }
  return out;
}

}  // namespace segrasp
