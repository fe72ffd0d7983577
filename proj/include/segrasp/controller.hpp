#pragma once
#include <array>

#include "segrasp/image.hpp"
#include "segrasp/nn.hpp"
#include "segrasp/rollout.hpp"

namespace segrasp {

// Two-pathway policy: conv trunk over the binary mask, small dense trunk over
// the 8-entry proprioceptive vector, features concatenated into a dense head
// that emits 8 tanh-bounded channels (7 joint deltas + gripper).
template <typename S>
class ControllerNet {
 public:
  static constexpr int kMaskIn = 100;
  static constexpr int kStateDim = 8;
  static constexpr int kOutDim = 8;
  static constexpr int kFeat = 128;

  explicit ControllerNet(uint64_t seed)
      : mask_path_({LayerSpec::conv2d(16, 5, 4, 0), LayerSpec::relu(),
                    LayerSpec::conv2d(32, 5, 4, 0), LayerSpec::relu(), LayerSpec::flatten(),
                    LayerSpec::dense(kFeat), LayerSpec::relu()},
                   {1, kMaskIn, kMaskIn}, Rng(seed).derive(0x6d61736bull)),
        state_path_({LayerSpec::dense(kFeat), LayerSpec::relu()}, {kStateDim},
                    Rng(seed).derive(0x73746174ull)),
        head_({LayerSpec::dense(kFeat), LayerSpec::relu(), LayerSpec::dense(kOutDim),
               LayerSpec::tanh()},
              {2 * kFeat}, Rng(seed).derive(0x68656164ull)) {
    mask_path_.skip_input_grad();  // masks never receive gradients
  }

  ControllerNet(const ControllerNet&) = delete;
  ControllerNet& operator=(const ControllerNet&) = delete;

  // mask [N,1,100,100], state [N,8] -> [N,8] in (-1,1)
  Tensor<S> forward(const Tensor<S>& mask, const Tensor<S>& state) {
    mask.require_shape({mask.shape.empty() ? 0 : mask.shape[0], 1, kMaskIn, kMaskIn},
                       "controller mask input");
    state.require_shape({mask.shape[0], kStateDim}, "controller state input");
    n_ = mask.shape[0];
    const Tensor<S> mf = mask_path_.forward(mask);
    const Tensor<S> sf = state_path_.forward(state);
    Tensor<S> cat({n_, 2 * kFeat});
    for (int n = 0; n < n_; n++) {
      std::copy_n(mf.data() + static_cast<size_t>(n) * kFeat, kFeat,
                  cat.data() + static_cast<size_t>(n) * 2 * kFeat);
      std::copy_n(sf.data() + static_cast<size_t>(n) * kFeat, kFeat,
                  cat.data() + static_cast<size_t>(n) * 2 * kFeat + kFeat);
    }
    return head_.forward(cat);
  }

  void backward(const Tensor<S>& dy) {
    dy.require_shape({n_, kOutDim}, "controller backward");
    const Tensor<S> dcat = head_.backward(dy);
    Tensor<S> dmf({n_, kFeat}), dsf({n_, kFeat});
    for (int n = 0; n < n_; n++) {
      std::copy_n(dcat.data() + static_cast<size_t>(n) * 2 * kFeat, kFeat,
                  dmf.data() + static_cast<size_t>(n) * kFeat);
      std::copy_n(dcat.data() + static_cast<size_t>(n) * 2 * kFeat + kFeat, kFeat,
                  dsf.data() + static_cast<size_t>(n) * kFeat);
    }
    mask_path_.backward(dmf);
    state_path_.backward(dsf);
  }

  std::vector<ParamRef<S>> params() {
    std::vector<ParamRef<S>> out;
    mask_path_.collect_params("mask", out);
    state_path_.collect_params("state", out);
    head_.collect_params("head", out);
    return out;
  }

  void zero_grads() {
    for (ParamRef<S>& p : params()) p.grad->zero();
  }

  Sequential<S>& mask_path() { return mask_path_; }
  Sequential<S>& state_path() { return state_path_; }
  Sequential<S>& head() { return head_; }

 private:
  Sequential<S> mask_path_, state_path_, head_;
  int n_ = 0;
};

template <typename S>
void mask_into(const SegMask& m, S* dst) {
  if (m.w != ControllerNet<S>::kMaskIn || m.h != ControllerNet<S>::kMaskIn)
    throw ShapeError("mask is " + std::to_string(m.w) + "x" + std::to_string(m.h) + ", want " +
                     std::to_string(ControllerNet<S>::kMaskIn) + " square");
  for (size_t i = 0; i < m.v.size(); i++) dst[i] = m.v[i] ? S(1) : S(0);
}

template <typename S>
std::array<double, 8> controller_output(ControllerNet<S>& net, const SegMask& mask,
                                        const std::array<double, 8>& obs) {
  Tensor<S> mt({1, 1, ControllerNet<S>::kMaskIn, ControllerNet<S>::kMaskIn});
  mask_into(mask, mt.data());
  Tensor<S> st({1, ControllerNet<S>::kStateDim});
  for (int i = 0; i < 8; i++) st.v[i] = static_cast<S>(obs[i]);
  const Tensor<S> y = net.forward(mt, st);
  std::array<double, 8> out{};
  for (int i = 0; i < 8; i++) out[i] = static_cast<double>(y.v[i]);
  return out;
}

// zeroes the grads, runs one forward/backward pass, and returns the batch
// loss: mean over the batch of per-sample squared L2 distance to the label
template <typename S>
double controller_accumulate_batch(ControllerNet<S>& net, const Tensor<S>& masks,
                                   const Tensor<S>& states, const Tensor<S>& targets) {
  if (masks.shape.empty() || masks.shape[0] == 0) throw UsageError("train_batch: empty batch");
  const int n = masks.shape[0];
  const Tensor<S> pred = net.forward(masks, states);
  const double loss = static_cast<double>(squared_l2(pred, targets)) / n;
  Tensor<S> g = squared_l2_grad(pred, targets);
  const S inv_n = S(1) / static_cast<S>(n);
  for (S& v : g.v) v *= inv_n;
  net.zero_grads();
  net.backward(g);
  return loss;
}

// returns the loss from before the optimizer step
template <typename S>
double controller_train_batch(ControllerNet<S>& net, Adam<S>& opt, const Tensor<S>& masks,
                              const Tensor<S>& states, const Tensor<S>& targets) {
  const double loss = controller_accumulate_batch(net, masks, states, targets);
  opt.step(net.params());
  return loss;
}

}  // namespace segrasp
