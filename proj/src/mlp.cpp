#include "ml2sls/mlp.hpp"

#include <cmath>
#include <numeric>

namespace ml2sls {

namespace {
constexpr double kLeakSlope = 0.01;
constexpr double kLearningRate = 0.001;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kEpochs = 40;
constexpr int kBatch = 10;
}  // namespace

int MlpArch::param_count(int inputs) const {
  if (depth == 0) return inputs + 1;
  int total = (inputs + 1) * width;
  for (int l = 1; l < depth; ++l) total += (width + 1) * width;
  total += width + 1;
  return total;
}

std::string MlpArch::label() const {
  if (depth == 0) return "d0";
  return "d" + std::to_string(depth) + "w" + std::to_string(width) + "p" +
         format_double(dropout);
}

Mlp Mlp::train(const Vec& target, const Mat& X, const MlpArch& arch,
               Substream& init_stream, Substream& train_stream) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());

  Mlp net;
  net.arch_ = arch;
  std::vector<int> sizes;
  sizes.push_back(p);
  for (int l = 0; l < arch.depth; ++l) sizes.push_back(arch.width);
  sizes.push_back(1);
  const int n_layers = static_cast<int>(sizes.size()) - 1;

  // Fan-in-scaled symmetric initialization; biases start at zero.
  for (int l = 0; l < n_layers; ++l) {
    const int fan_in = sizes[static_cast<std::size_t>(l)];
    const int fan_out = sizes[static_cast<std::size_t>(l + 1)];
    const double limit = std::sqrt(6.0 / fan_in);
    Mat w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = init_stream.uniform(-limit, limit);
    }
    net.W_.push_back(std::move(w));
    net.b_.push_back(Vec::Zero(fan_out));
  }

  std::vector<Mat> mW(net.W_.size()), vW(net.W_.size());
  std::vector<Vec> mB(net.b_.size()), vB(net.b_.size());
  for (std::size_t l = 0; l < net.W_.size(); ++l) {
    mW[l] = Mat::Zero(net.W_[l].rows(), net.W_[l].cols());
    vW[l] = mW[l];
    mB[l] = Vec::Zero(net.b_[l].size());
    vB[l] = mB[l];
  }

  const Mat Xt = X.transpose();  // features x samples
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::vector<Mat> act(net.W_.size() + 1);   // post-activation per layer
  std::vector<Mat> pre(net.W_.size());       // pre-activation
  std::vector<Mat> mask(net.W_.size());      // dropout masks (hidden layers)
  long step = 0;
  double beta1_t = 1.0, beta2_t = 1.0;

  for (int epoch = 0; epoch < kEpochs; ++epoch) {
    train_stream.shuffle(order);
    double epoch_sse = 0.0;
    for (int start = 0; start < n; start += kBatch) {
      const int bsz = std::min(kBatch, n - start);
      Mat xb(p, bsz);
      Eigen::RowVectorXd tb(bsz);
      for (int c = 0; c < bsz; ++c) {
        const int s = order[static_cast<std::size_t>(start + c)];
        xb.col(c) = Xt.col(s);
        tb[c] = target[s];
      }

      // forward
      act[0] = std::move(xb);
      for (int l = 0; l < n_layers; ++l) {
        pre[static_cast<std::size_t>(l)] =
            (net.W_[static_cast<std::size_t>(l)] * act[static_cast<std::size_t>(l)]).colwise() +
            net.b_[static_cast<std::size_t>(l)];
        if (l == n_layers - 1) {
          act[static_cast<std::size_t>(l + 1)] = pre[static_cast<std::size_t>(l)];
        } else {
          Mat h = pre[static_cast<std::size_t>(l)].unaryExpr([](double v) {
            return v > 0.0 ? v : kLeakSlope * v;
          });
          if (arch.dropout > 0.0) {
            Mat& mk = mask[static_cast<std::size_t>(l)];
            mk.resize(h.rows(), h.cols());
            const double keep = 1.0 - arch.dropout;
            for (int r = 0; r < h.rows(); ++r) {
              for (int c = 0; c < h.cols(); ++c) {
                mk(r, c) = train_stream.uniform() < keep ? 1.0 / keep : 0.0;
              }
            }
            h = h.cwiseProduct(mk);
          }
          act[static_cast<std::size_t>(l + 1)] = std::move(h);
        }
      }

      // backward: mean squared error over the batch
      const Eigen::RowVectorXd err = act[static_cast<std::size_t>(n_layers)].row(0) - tb;
      epoch_sse += err.squaredNorm();
      Mat delta = (2.0 / bsz) * err;  // 1 x bsz
      ++step;
      beta1_t *= kBeta1;
      beta2_t *= kBeta2;
      for (int l = n_layers - 1; l >= 0; --l) {
        const Mat gW = delta * act[static_cast<std::size_t>(l)].transpose();
        const Vec gB = delta.rowwise().sum();
        // adaptive-moment update
        auto& mw = mW[static_cast<std::size_t>(l)];
        auto& vw = vW[static_cast<std::size_t>(l)];
        mw = kBeta1 * mw + (1.0 - kBeta1) * gW;
        vw = kBeta2 * vw + (1.0 - kBeta2) * gW.cwiseProduct(gW);
        auto& mb = mB[static_cast<std::size_t>(l)];
        auto& vb = vB[static_cast<std::size_t>(l)];
        mb = kBeta1 * mb + (1.0 - kBeta1) * gB;
        vb = kBeta2 * vb + (1.0 - kBeta2) * gB.cwiseProduct(gB);
        const double corr1 = 1.0 - beta1_t;
        const double corr2 = 1.0 - beta2_t;
        net.W_[static_cast<std::size_t>(l)] -=
            (kLearningRate * (mw / corr1).array() /
             ((vw / corr2).array().sqrt() + kAdamEps))
                .matrix();
        net.b_[static_cast<std::size_t>(l)] -=
            (kLearningRate * (mb / corr1).array() /
             ((vb / corr2).array().sqrt() + kAdamEps))
                .matrix();
        if (l > 0) {
          Mat up = net.W_[static_cast<std::size_t>(l)].transpose() * delta;
          if (arch.dropout > 0.0) up = up.cwiseProduct(mask[static_cast<std::size_t>(l - 1)]);
          delta = up.cwiseProduct(pre[static_cast<std::size_t>(l - 1)].unaryExpr(
              [](double v) { return v > 0.0 ? 1.0 : kLeakSlope; }));
        }
      }
    }
    if (!std::isfinite(epoch_sse)) {
      throw FitError("mlp: training diverged at epoch " + std::to_string(epoch));
    }
  }
  return net;
}

Vec Mlp::predict(const Mat& X) const {
  Mat h = X.transpose();
  const int n_layers = static_cast<int>(W_.size());
  for (int l = 0; l < n_layers; ++l) {
    Mat z = (W_[static_cast<std::size_t>(l)] * h).colwise() + b_[static_cast<std::size_t>(l)];
    if (l == n_layers - 1) {
      h = std::move(z);
    } else {
      h = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakSlope * v; });
    }
  }
  return h.row(0).transpose();
}

}  // namespace ml2sls
