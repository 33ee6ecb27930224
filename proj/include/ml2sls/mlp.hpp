#pragma once

#include <string>
#include <vector>

#include "ml2sls/common.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

/// One point of the neural search space. depth is the hidden-layer count;
/// depth 0 is a direct input->output affine map (approximating linear
/// regression), in which case width and dropout are ignored.
struct MlpArch {
  int depth = 0;
  int width = 0;
  double dropout = 0.0;

  int param_count(int inputs) const;
  std::string label() const;
};

/// Feed-forward regressor: leaky-rectifier hidden units (slope 0.01), linear
/// output, inverted dropout on hidden activations during training only, and
/// an adaptive-moment optimizer (lr 0.001, decay 0.9/0.999) run for 40
/// epochs at batch size 10 with per-epoch reshuffling.
class Mlp {
 public:
  /// Throws FitError (naming the epoch) if the loss becomes non-finite.
  static Mlp train(const Vec& target, const Mat& X, const MlpArch& arch,
                   Substream& init_stream, Substream& train_stream);

  Vec predict(const Mat& X) const;

  const std::vector<Mat>& weights() const { return W_; }
  const MlpArch& arch() const { return arch_; }

 private:
  MlpArch arch_;
  std::vector<Mat> W_;
  std::vector<Vec> b_;
};

}  // namespace ml2sls
