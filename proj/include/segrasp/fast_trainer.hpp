#pragma once
#include <cstdint>

#include "segrasp/controller.hpp"

namespace segrasp {

// Training-time representation of one demonstration frame. The mask enters
// the conv trunk as a binary image, so each 5x5/stride-4 window is empty,
// full, or partial; empty windows see only the bias, full windows all of it.
// Everything below is precomputed once per frame and reused every epoch.
template <typename S>
struct FrameSparse {
  static constexpr int kCells = 24;  // conv1 output extent
  static constexpr int kOut = 5;     // conv2 output extent

  std::vector<uint16_t> nonempty;    // conv1 cells with any mask pixel, ascending
  std::vector<uint8_t> kind;         // 1 full window, 0 partial
  std::vector<uint32_t> off_begin;   // per nonempty cell, range into offs (empty for full)
  std::vector<uint8_t> offs;         // kernel offsets ky*5+kx of set pixels
  struct Pair {                      // conv2 receptive links touching a nonempty cell
    uint16_t ci;                     // index into nonempty
    uint8_t oa;                      // index into active
    uint8_t off2;                    // kernel offset inside the conv2 window
  };
  std::vector<Pair> pairs;
  std::vector<uint8_t> active;       // conv2 output cells reached by any pair
  std::array<S, 8> obs;
  std::array<S, 8> label;
  int on_pixels = 0;
};

template <typename S>
FrameSparse<S> build_frame_sparse(const SegMask& m, const std::array<double, 8>& obs,
                                  const std::array<double, 8>& label) {
  if (m.w != 100 || m.h != 100)
    throw ShapeError("frame mask is " + std::to_string(m.w) + "x" + std::to_string(m.h) +
                     ", want 100x100");
  FrameSparse<S> fs;
  for (int i = 0; i < 8; i++) {
    fs.obs[i] = static_cast<S>(obs[i]);
    fs.label[i] = static_cast<S>(label[i]);
  }
  fs.off_begin.push_back(0);
  for (int cy = 0; cy < FrameSparse<S>::kCells; cy++)
    for (int cx = 0; cx < FrameSparse<S>::kCells; cx++) {
      uint8_t local[25];
      int cnt = 0;
      for (int ky = 0; ky < 5; ky++)
        for (int kx = 0; kx < 5; kx++)
          if (m.at(4 * cy + ky, 4 * cx + kx)) local[cnt++] = static_cast<uint8_t>(ky * 5 + kx);
      if (cnt == 0) continue;
      fs.nonempty.push_back(static_cast<uint16_t>(cy * FrameSparse<S>::kCells + cx));
      fs.kind.push_back(cnt == 25 ? 1 : 0);
      if (cnt < 25) fs.offs.insert(fs.offs.end(), local, local + cnt);
      fs.off_begin.push_back(static_cast<uint32_t>(fs.offs.size()));
      fs.on_pixels += cnt;
    }
  // conv2 links: cell c is seen by output o when c = 4*o + k2, k2 in [0,5)
  uint8_t active_idx[25];
  std::fill(active_idx, active_idx + 25, 255);
  for (size_t ci = 0; ci < fs.nonempty.size(); ci++) {
    const int cy = fs.nonempty[ci] / FrameSparse<S>::kCells;
    const int cx = fs.nonempty[ci] % FrameSparse<S>::kCells;
    const int oy_lo = cy <= 4 ? 0 : (cy - 4 + 3) / 4, oy_hi = std::min(4, cy / 4);
    const int ox_lo = cx <= 4 ? 0 : (cx - 4 + 3) / 4, ox_hi = std::min(4, cx / 4);
    for (int oy = oy_lo; oy <= oy_hi; oy++)
      for (int ox = ox_lo; ox <= ox_hi; ox++) {
        const int out = oy * FrameSparse<S>::kOut + ox;
        if (active_idx[out] == 255) {
          active_idx[out] = static_cast<uint8_t>(fs.active.size());
          fs.active.push_back(static_cast<uint8_t>(out));
        }
        const int off2 = (cy - 4 * oy) * 5 + (cx - 4 * ox);
        fs.pairs.push_back({static_cast<uint16_t>(ci), active_idx[out], static_cast<uint8_t>(off2)});
      }
  }
  return fs;
}

template <typename S>
struct FastDataset {
  std::vector<FrameSparse<S>> frames;
  void add(const SegMask& m, const std::array<double, 8>& obs, const std::array<double, 8>& label) {
    frames.push_back(build_frame_sparse<S>(m, obs, label));
  }
  size_t size() const { return frames.size(); }
};

// Gradient-for-gradient replacement for the dense reference pass. The mask
// trunk is evaluated as background + sparse correction: with fixed weights,
// every empty conv1 window produces the same activation column, so whole
// towers of the network collapse to per-batch constants and per-sample work
// scales with the mask footprint instead of the image area.
template <typename S>
class FastControllerTrainer {
 public:
  static constexpr int C1 = 16, C2 = 32, F = 128, O = 8;
  static constexpr int NC1 = 24 * 24, NC2 = 25, Q = C2 * NC2;  // flatten width 800

  explicit FastControllerTrainer(ControllerNet<S>& net) : net_(net) {
    auto ps = net.params();
    auto grab = [&](const std::string& name, std::vector<int> shape) {
      for (auto& p : ps)
        if (p.name == name) {
          p.value->require_shape(shape, name.c_str());
          return std::pair<Tensor<S>*, Tensor<S>*>{p.value, p.grad};
        }
      throw UsageError("fast trainer: missing parameter " + name);
    };
    std::tie(W1_, dW1_) = grab("mask.0.W", {C1, 25});
    std::tie(b1_, db1_) = grab("mask.0.b", {C1});
    std::tie(W2_, dW2_) = grab("mask.2.W", {C2, C1 * 25});
    std::tie(b2_, db2_) = grab("mask.2.b", {C2});
    std::tie(Wd_, dWd_) = grab("mask.5.W", {F, Q});
    std::tie(bd_, dbd_) = grab("mask.5.b", {F});
    std::tie(Ws_, dWs_) = grab("state.0.W", {F, O});
    std::tie(bs_, dbs_) = grab("state.0.b", {F});
    std::tie(Wh_, dWh_) = grab("head.0.W", {F, 2 * F});
    std::tie(bh_, dbh_) = grab("head.0.b", {F});
    std::tie(Wo_, dWo_) = grab("head.2.W", {O, F});
    std::tie(bo_, dbo_) = grab("head.2.b", {O});
  }

  ControllerNet<S>& net() { return net_; }

  // one forward/backward over ds.frames[idx[0..n)], grads left in the net
  double accumulate_batch(const FastDataset<S>& ds, const uint32_t* idx, int n) {
    if (n <= 0) throw UsageError("train_batch: empty batch");
    pin_blas_single_thread();
    net_.zero_grads();
    refresh_derived();

    // ---- per-sample layout
    ne_off_.assign(n + 1, 0);
    act_off_.assign(n + 1, 0);
    size_t max_ne = 0;
    for (int i = 0; i < n; i++) {
      const FrameSparse<S>& fr = ds.frames[idx[i]];
      ne_off_[i + 1] = ne_off_[i] + static_cast<uint32_t>(fr.nonempty.size());
      act_off_[i + 1] = act_off_[i] + static_cast<uint32_t>(fr.active.size());
      max_ne = std::max(max_ne, fr.nonempty.size());
    }
    y1v_.resize(static_cast<size_t>(ne_off_[n]) * C1);
    d1v_.resize(static_cast<size_t>(ne_off_[n]) * C1);
    y2a_.resize(static_cast<size_t>(act_off_[n]) * C2);
    yd1_.assign(static_cast<size_t>(n) * F, S(0));
    mfe_.resize(static_cast<size_t>(n) * F);
    obsb_.resize(static_cast<size_t>(n) * O);
    lab_.resize(static_cast<size_t>(n) * O);

    // ---- mask trunk forward, sparse
    for (int i = 0; i < n; i++) {
      const FrameSparse<S>& fr = ds.frames[idx[i]];
      S* y1 = y1v_.data() + static_cast<size_t>(ne_off_[i]) * C1;
      S* d1 = d1v_.data() + static_cast<size_t>(ne_off_[i]) * C1;
      for (size_t ci = 0; ci < fr.nonempty.size(); ci++) {
        S* y = y1 + ci * C1;
        if (fr.kind[ci]) {
          std::copy_n(yfull_.data(), C1, y);
          std::copy_n(dfull_.data(), C1, d1 + ci * C1);
        } else {
          std::copy_n(b1_->data(), C1, y);
          for (uint32_t t = fr.off_begin[ci]; t < fr.off_begin[ci + 1]; t++) {
            const S* col = w1t_.data() + static_cast<size_t>(fr.offs[t]) * C1;
            for (int oc = 0; oc < C1; oc++) y[oc] += col[oc];
          }
          S* d = d1 + ci * C1;
          for (int oc = 0; oc < C1; oc++) d[oc] = (y[oc] > S(0) ? y[oc] : S(0)) - rbg1_[oc];
        }
      }
      S* y2 = y2a_.data() + static_cast<size_t>(act_off_[i]) * C2;
      for (size_t oa = 0; oa < fr.active.size(); oa++) std::copy_n(s2_.data(), C2, y2 + oa * C2);
      for (const auto& pr : fr.pairs) {
        S* yc = y2 + static_cast<size_t>(pr.oa) * C2;
        const S* d = d1 + static_cast<size_t>(pr.ci) * C1;
        const S* blk = w2blk_.data() + static_cast<size_t>(pr.off2) * C1 * C2;
        for (int ic = 0; ic < C1; ic++) {
          const S dv = d[ic];
          if (dv == S(0)) continue;
          const S* row = blk + static_cast<size_t>(ic) * C2;
          for (int oc = 0; oc < C2; oc++) yc[oc] += row[oc] * dv;
        }
      }
      S* yd = yd1_.data() + static_cast<size_t>(i) * F;
      std::copy_n(u0_.data(), F, yd);
      for (size_t oa = 0; oa < fr.active.size(); oa++) {
        const S* yc = y2 + oa * C2;
        const int cell = fr.active[oa];
        for (int oc = 0; oc < C2; oc++) {
          const S dh = (yc[oc] > S(0) ? yc[oc] : S(0)) - rbg2_[oc];
          if (dh == S(0)) continue;
          const S* col = wd1t_.data() + (static_cast<size_t>(oc) * NC2 + cell) * F;
          for (int j = 0; j < F; j++) yd[j] += col[j] * dh;
        }
      }
      S* mrow = mfe_.data() + static_cast<size_t>(i) * F;
      for (int j = 0; j < F; j++) mrow[j] = yd[j] > S(0) ? yd[j] : S(0);
      std::copy_n(fr.obs.data(), O, obsb_.data() + static_cast<size_t>(i) * O);
      std::copy_n(fr.label.data(), O, lab_.data() + static_cast<size_t>(i) * O);
    }

    // ---- state path + head, batched
    sz_.resize(static_cast<size_t>(n) * F);
    gemm(false, true, n, F, O, S(1), obsb_.data(), O, Ws_->data(), O, S(0), sz_.data(), F);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < F; j++) sz_[static_cast<size_t>(i) * F + j] += bs_->v[j];
    cat_.resize(static_cast<size_t>(n) * 2 * F);
    for (int i = 0; i < n; i++) {
      std::copy_n(mfe_.data() + static_cast<size_t>(i) * F, F, cat_.data() + static_cast<size_t>(i) * 2 * F);
      S* right = cat_.data() + static_cast<size_t>(i) * 2 * F + F;
      const S* z = sz_.data() + static_cast<size_t>(i) * F;
      for (int j = 0; j < F; j++) right[j] = z[j] > S(0) ? z[j] : S(0);
    }
    h1z_.resize(static_cast<size_t>(n) * F);
    gemm(false, true, n, F, 2 * F, S(1), cat_.data(), 2 * F, Wh_->data(), 2 * F, S(0), h1z_.data(), F);
    h1_.resize(static_cast<size_t>(n) * F);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < F; j++) {
        S& z = h1z_[static_cast<size_t>(i) * F + j];
        z += bh_->v[j];
        h1_[static_cast<size_t>(i) * F + j] = z > S(0) ? z : S(0);
      }
    pred_.resize(static_cast<size_t>(n) * O);
    gemm(false, true, n, O, F, S(1), h1_.data(), F, Wo_->data(), F, S(0), pred_.data(), O);
    double loss = 0;
    dp_.resize(static_cast<size_t>(n) * O);
    for (int i = 0; i < n; i++)
      for (int k = 0; k < O; k++) {
        S& p = pred_[static_cast<size_t>(i) * O + k];
        p = std::tanh(p + bo_->v[k]);
        const S e = p - lab_[static_cast<size_t>(i) * O + k];
        loss += static_cast<double>(e) * static_cast<double>(e);
        // d(mean loss)/d(pre-tanh) folded into one term
        dp_[static_cast<size_t>(i) * O + k] = S(2) / static_cast<S>(n) * e * (S(1) - p * p);
      }
    loss /= n;

    // ---- head/state backward, batched
    gemm(true, false, O, F, n, S(1), dp_.data(), O, h1_.data(), F, S(1), dWo_->data(), F);
    for (int i = 0; i < n; i++)
      for (int k = 0; k < O; k++) dbo_->v[k] += dp_[static_cast<size_t>(i) * O + k];
    dh1_.resize(static_cast<size_t>(n) * F);
    gemm(false, false, n, F, O, S(1), dp_.data(), O, Wo_->data(), F, S(0), dh1_.data(), F);
    for (size_t t = 0; t < dh1_.size(); t++)
      if (h1z_[t] <= S(0)) dh1_[t] = S(0);
    gemm(true, false, F, 2 * F, n, S(1), dh1_.data(), F, cat_.data(), 2 * F, S(1), dWh_->data(), 2 * F);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < F; j++) dbh_->v[j] += dh1_[static_cast<size_t>(i) * F + j];
    dcat_.resize(static_cast<size_t>(n) * 2 * F);
    gemm(false, false, n, 2 * F, F, S(1), dh1_.data(), F, Wh_->data(), 2 * F, S(0), dcat_.data(), 2 * F);
    ds_.resize(static_cast<size_t>(n) * F);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < F; j++) {
        const S g = dcat_[static_cast<size_t>(i) * 2 * F + F + j];
        ds_[static_cast<size_t>(i) * F + j] = sz_[static_cast<size_t>(i) * F + j] > S(0) ? g : S(0);
      }
    gemm(true, false, F, O, n, S(1), ds_.data(), F, obsb_.data(), O, S(1), dWs_->data(), O);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < F; j++) dbs_->v[j] += ds_[static_cast<size_t>(i) * F + j];

    // ---- mask trunk backward, sparse
    dw1t_.assign(25 * C1, S(0));
    dw2t_.assign(static_cast<size_t>(C1) * 25 * C2, S(0));
    dwdt_.assign(static_cast<size_t>(Q) * F, S(0));
    std::vector<S>& sumdz = scratch_sumdz_;
    sumdz.assign(F, S(0));
    g2tot_.assign(C2, S(0));
    f1tot_.assign(C1, S(0));
    db1acc_.assign(C1, S(0));
    dy2a_.resize(y2a_.size());
    dy1v_.resize(static_cast<size_t>(max_ne) * C1);

    for (int i = 0; i < n; i++) {
      const FrameSparse<S>& fr = ds.frames[idx[i]];
      const S* yd = yd1_.data() + static_cast<size_t>(i) * F;
      // relu around the mask-path dense layer
      S dz[F];
      const S* dm = dcat_.data() + static_cast<size_t>(i) * 2 * F;
      for (int j = 0; j < F; j++) dz[j] = yd[j] > S(0) ? dm[j] : S(0);
      for (int j = 0; j < F; j++) sumdz[j] += dz[j];

      const S* y2 = y2a_.data() + static_cast<size_t>(act_off_[i]) * C2;
      S* dy2 = dy2a_.data() + static_cast<size_t>(act_off_[i]) * C2;
      S sact[C2] = {};
      for (size_t oa = 0; oa < fr.active.size(); oa++) {
        const S* yc = y2 + oa * C2;
        const int cell = fr.active[oa];
        for (int oc = 0; oc < C2; oc++) {
          const size_t q = static_cast<size_t>(oc) * NC2 + cell;
          const S* col = wd1t_.data() + q * F;
          const S dh = (yc[oc] > S(0) ? yc[oc] : S(0)) - rbg2_[oc];
          S dx = S(0);
          if (dh != S(0)) {
            S* drow = dwdt_.data() + q * F;
            for (int j = 0; j < F; j++) {
              drow[j] += dz[j] * dh;
              dx += col[j] * dz[j];
            }
          } else {
            for (int j = 0; j < F; j++) dx += col[j] * dz[j];
          }
          sact[oc] += dx;
          dy2[oa * C2 + oc] = yc[oc] > S(0) ? dx : S(0);
        }
      }
      // channel sums of the dense-layer input gradient over all conv2 cells
      S g2[C2];
      for (int oc = 0; oc < C2; oc++) g2[oc] = S(0);
      for (int j = 0; j < F; j++) {
        const S d = dz[j];
        if (d == S(0)) continue;
        const S* cs = colsum_.data() + static_cast<size_t>(j) * C2;
        for (int oc = 0; oc < C2; oc++) g2[oc] += cs[oc] * d;
      }
      for (int oc = 0; oc < C2; oc++) {
        S bg = relu2bg_[oc] ? g2[oc] - sact[oc] : S(0);
        for (size_t oa = 0; oa < fr.active.size(); oa++) bg += dy2[oa * C2 + oc];
        g2[oc] = bg;  // now the true sum of dy2 over every output cell
        g2tot_[oc] += bg;
      }

      // conv2 links: weight grads and the gradient entering nonempty cells
      std::fill_n(dy1v_.data(), fr.nonempty.size() * C1, S(0));
      const S* d1 = d1v_.data() + static_cast<size_t>(ne_off_[i]) * C1;
      for (const auto& pr : fr.pairs) {
        const S* dyc = dy2 + static_cast<size_t>(pr.oa) * C2;
        const S* dv = d1 + static_cast<size_t>(pr.ci) * C1;
        const S* blk = w2blk_.data() + static_cast<size_t>(pr.off2) * C1 * C2;
        S* dy1 = dy1v_.data() + static_cast<size_t>(pr.ci) * C1;
        for (int ic = 0; ic < C1; ic++) {
          const S dval = dv[ic];
          S* dwr = dw2t_.data() + (static_cast<size_t>(ic) * 25 + pr.off2) * C2;
          const S* row = blk + static_cast<size_t>(ic) * C2;
          S acc = S(0);
          for (int oc = 0; oc < C2; oc++) {
            dwr[oc] += dyc[oc] * dval;
            acc += row[oc] * dyc[oc];
          }
          dy1[ic] += acc;
        }
      }

      // conv1: relu, window scatter, and bias bookkeeping. Empty windows all
      // share one activation, so their bias gradient reduces to channel sums.
      const S* y1 = y1v_.data() + static_cast<size_t>(ne_off_[i]) * C1;
      S sum_ne[C1] = {}, sum_all[C1] = {};
      for (int ic = 0; ic < C1; ic++) {
        S a = S(0);
        for (int oc = 0; oc < C2; oc++) a += wsum2_[static_cast<size_t>(oc) * C1 + ic] * g2[oc];
        sum_all[ic] = a;
      }
      for (size_t ci = 0; ci < fr.nonempty.size(); ci++) {
        const S* dy1 = dy1v_.data() + ci * C1;
        const S* y = y1 + ci * C1;
        S dz1[C1];
        for (int oc = 0; oc < C1; oc++) {
          sum_ne[oc] += dy1[oc];
          dz1[oc] = y[oc] > S(0) ? dy1[oc] : S(0);
          db1acc_[oc] += dz1[oc];
        }
        if (fr.kind[ci]) {
          for (int oc = 0; oc < C1; oc++) f1tot_[oc] += dz1[oc];
        } else {
          for (uint32_t t = fr.off_begin[ci]; t < fr.off_begin[ci + 1]; t++) {
            S* col = dw1t_.data() + static_cast<size_t>(fr.offs[t]) * C1;
            for (int oc = 0; oc < C1; oc++) col[oc] += dz1[oc];
          }
        }
      }
      for (int oc = 0; oc < C1; oc++)
        if (relu1bg_[oc]) db1acc_[oc] += sum_all[oc] - sum_ne[oc];
    }

    // ---- fold the transposed/background accumulators into the canonical grads
    for (int j = 0; j < F; j++) dbd_->v[j] += sumdz[j];
    for (int j = 0; j < F; j++) {
      S* row = dWd_->data() + static_cast<size_t>(j) * Q;
      const S d = sumdz[j];
      for (int q = 0; q < Q; q++) row[q] += dwdt_[static_cast<size_t>(q) * F + j] + d * h0q_[q];
    }
    for (int oc = 0; oc < C2; oc++) {
      db2_->v[oc] += g2tot_[oc];
      S* row = dW2_->data() + static_cast<size_t>(oc) * C1 * 25;
      for (int ic = 0; ic < C1; ic++)
        for (int off = 0; off < 25; off++)
          row[ic * 25 + off] += dw2t_[(static_cast<size_t>(ic) * 25 + off) * C2 + oc] + g2tot_[oc] * rbg1_[ic];
    }
    for (int oc = 0; oc < C1; oc++) {
      db1_->v[oc] += db1acc_[oc];
      S* row = dW1_->data() + static_cast<size_t>(oc) * 25;
      for (int off = 0; off < 25; off++) row[off] += dw1t_[static_cast<size_t>(off) * C1 + oc] + f1tot_[oc];
    }
    return loss;
  }

  double train_batch(const FastDataset<S>& ds, const uint32_t* idx, int n, Adam<S>& opt) {
    const double loss = accumulate_batch(ds, idx, n);
    opt.step(net_.params());
    return loss;
  }

 private:
  void refresh_derived() {
    w1t_.resize(25 * C1);
    for (int oc = 0; oc < C1; oc++)
      for (int off = 0; off < 25; off++) w1t_[static_cast<size_t>(off) * C1 + oc] = W1_->v[oc * 25 + off];
    w2blk_.resize(static_cast<size_t>(25) * C1 * C2);
    wsum2_.assign(static_cast<size_t>(C2) * C1, S(0));
    for (int oc = 0; oc < C2; oc++)
      for (int ic = 0; ic < C1; ic++)
        for (int off = 0; off < 25; off++) {
          const S w = W2_->v[static_cast<size_t>(oc) * C1 * 25 + ic * 25 + off];
          w2blk_[(static_cast<size_t>(off) * C1 + ic) * C2 + oc] = w;
          wsum2_[static_cast<size_t>(oc) * C1 + ic] += w;
        }
    wd1t_.resize(static_cast<size_t>(Q) * F);
    for (int jb = 0; jb < F; jb += 16)
      for (int q = 0; q < Q; q++)
        for (int j = jb; j < jb + 16; j++)
          wd1t_[static_cast<size_t>(q) * F + j] = Wd_->v[static_cast<size_t>(j) * Q + q];
    colsum_.assign(static_cast<size_t>(F) * C2, S(0));
    for (int j = 0; j < F; j++) {
      const S* row = Wd_->data() + static_cast<size_t>(j) * Q;
      for (int oc = 0; oc < C2; oc++) {
        S s = S(0);
        for (int cell = 0; cell < NC2; cell++) s += row[oc * NC2 + cell];
        colsum_[static_cast<size_t>(j) * C2 + oc] = s;
      }
    }
    yfull_.resize(C1);
    rbg1_.resize(C1);
    dfull_.resize(C1);
    relu1bg_.resize(C1);
    for (int oc = 0; oc < C1; oc++) {
      S s = b1_->v[oc];
      for (int off = 0; off < 25; off++) s += W1_->v[oc * 25 + off];
      yfull_[oc] = s;
      rbg1_[oc] = b1_->v[oc] > S(0) ? b1_->v[oc] : S(0);
      dfull_[oc] = (s > S(0) ? s : S(0)) - rbg1_[oc];
      relu1bg_[oc] = b1_->v[oc] > S(0);
    }
    s2_.resize(C2);
    rbg2_.resize(C2);
    relu2bg_.resize(C2);
    for (int oc = 0; oc < C2; oc++) {
      S s = b2_->v[oc];
      for (int ic = 0; ic < C1; ic++) s += wsum2_[static_cast<size_t>(oc) * C1 + ic] * rbg1_[ic];
      s2_[oc] = s;
      rbg2_[oc] = s > S(0) ? s : S(0);
      relu2bg_[oc] = s > S(0);
    }
    h0q_.resize(Q);
    for (int q = 0; q < Q; q++) h0q_[q] = rbg2_[q / NC2];
    u0_.resize(F);
    for (int j = 0; j < F; j++) {
      S s = bd_->v[j];
      for (int oc = 0; oc < C2; oc++) s += colsum_[static_cast<size_t>(j) * C2 + oc] * rbg2_[oc];
      u0_[j] = s;
    }
  }

  ControllerNet<S>& net_;
  Tensor<S>*W1_, *dW1_, *b1_, *db1_, *W2_, *dW2_, *b2_, *db2_, *Wd_, *dWd_, *bd_, *dbd_;
  Tensor<S>*Ws_, *dWs_, *bs_, *dbs_, *Wh_, *dWh_, *bh_, *dbh_, *Wo_, *dWo_, *bo_, *dbo_;

  // derived weight forms, refreshed per batch
  std::vector<S> w1t_, w2blk_, wsum2_, wd1t_, colsum_;
  std::vector<S> yfull_, rbg1_, dfull_, s2_, rbg2_, h0q_, u0_;
  std::vector<uint8_t> relu1bg_, relu2bg_;
  // batch staging
  std::vector<uint32_t> ne_off_, act_off_;
  std::vector<S> y1v_, d1v_, y2a_, yd1_, mfe_, obsb_, lab_;
  std::vector<S> sz_, cat_, h1z_, h1_, pred_, dp_, dh1_, dcat_, ds_;
  std::vector<S> dw1t_, dw2t_, dwdt_, g2tot_, f1tot_, db1acc_, dy2a_, dy1v_, scratch_sumdz_;
};

}  // namespace segrasp
