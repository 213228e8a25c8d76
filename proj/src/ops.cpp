#include "mscl/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "mscl/error.hpp"

namespace mscl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr double kProbClamp = 1e-12;
constexpr double kNormClamp = 1e-12;

ConstMap cmap(std::span<const double> v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap mmap(std::span<double> v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

bool tracking(std::initializer_list<const Tensor *> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const auto *t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool tracking(std::span<const Tensor> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor &t) { return t.requires_grad(); });
}

Tensor finish(const char *op, Tensor out, bool track, Tape::BackwardFn fn) {
  if (track) {
    out.set_requires_grad(true);
    Tape::active()->record(op, out, std::move(fn));
  }
  return out;
}

// (rows, cols) for row-wise ops; rank 1 is a single row.
std::pair<std::size_t, std::size_t> row_dims(const Tensor &x, const char *op) {
  if (x.rank() == 1) return {1, x.numel()};
  if (x.rank() == 2) return {x.shape()[0], x.shape()[1]};
  throw RankError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(x.shape()));
}

void require_rank2(const Tensor &x, const char *op) {
  if (x.rank() != 2) throw RankError(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_finite(const Tensor &x, const char *op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw InvalidValueError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor matmul(const Tensor &a, const Tensor &b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const auto r = a.rows(), k = a.cols(), c = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({r, c});
  mmap(out.mutable_data(), r, c).noalias() = cmap(a.data(), r, k) * cmap(b.data(), k, c);
  return finish("matmul", out, tracking({&a, &b}), [a, b, r, k, c](std::span<const double> g) mutable {
    auto G = cmap(g, r, c);
    if (a.requires_grad()) mmap(a.mutable_grad(), r, k).noalias() += G * cmap(b.data(), k, c).transpose();
    if (b.requires_grad()) mmap(b.mutable_grad(), k, c).noalias() += cmap(a.data(), r, k).transpose() * G;
  });
}

Tensor matmul_nt(const Tensor &a, const Tensor &b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const auto r = a.rows(), k = a.cols(), c = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor out = Tensor::zeros({r, c});
  mmap(out.mutable_data(), r, c).noalias() = cmap(a.data(), r, k) * cmap(b.data(), c, k).transpose();
  return finish("matmul_nt", out, tracking({&a, &b}), [a, b, r, k, c](std::span<const double> g) mutable {
    auto G = cmap(g, r, c);
    if (a.requires_grad()) mmap(a.mutable_grad(), r, k).noalias() += G * cmap(b.data(), c, k);
    if (b.requires_grad()) mmap(b.mutable_grad(), c, k).noalias() += G.transpose() * cmap(a.data(), r, k);
  });
}

Tensor transpose(const Tensor &a) {
  require_rank2(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c, r});
  mmap(out.mutable_data(), c, r) = cmap(a.data(), r, c).transpose();
  return finish("transpose", out, tracking({&a}), [a, r, c](std::span<const double> g) mutable {
    mmap(a.mutable_grad(), r, c) += cmap(g, c, r).transpose();
  });
}

Tensor add(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "add");
  Tensor out = a.detach();
  auto o = out.mutable_data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return finish("add", out, tracking({&a, &b}), [a, b](std::span<const double> g) mutable {
    for (const Tensor *t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.detach();
  auto o = out.mutable_data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return finish("sub", out, tracking({&a, &b}), [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.detach();
  auto o = out.mutable_data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return finish("mul", out, tracking({&a, &b}), [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      auto bd = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      auto ad = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
    }
  });
}

Tensor scale(const Tensor &a, double factor) {
  Tensor out = a.detach();
  for (auto &v : out.mutable_data()) v *= factor;
  return finish("scale", out, tracking({&a}), [a, factor](std::span<const double> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor add_row(const Tensor &x, const Tensor &bias) {
  auto [r, c] = row_dims(x, "add_row");
  if (bias.numel() != c) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " vs rows of " + shape_str(x.shape()));
  }
  Tensor out = x.detach();
  auto o = out.mutable_data();
  auto bd = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[i * c + j] += bd[j];
  return finish("add_row", out, tracking({&x, &bias}), [x, bias, r, c](std::span<const double> g) mutable {
    if (x.requires_grad()) {
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    }
  });
}

Tensor relu(const Tensor &x) {
  Tensor out = x.detach();
  for (auto &v : out.mutable_data()) v = v > 0.0 ? v : 0.0;
  return finish("relu", out, tracking({&x}), [x](std::span<const double> g) mutable {
    auto gx = x.mutable_grad();
    auto xd = x.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xd[i] > 0.0) gx[i] += g[i];
  });
}

namespace {

// Shared backward of the softmax family: gx = y * (g - <g, y>) per row.
Tape::BackwardFn softmax_backward(Tensor x, Tensor out, std::size_t r, std::size_t c) {
  return [x, out, r, c](std::span<const double> g) mutable {
    auto gx = x.mutable_grad();
    auto y = out.data();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  };
}

Tensor softmax_impl(const Tensor &x, const char *op, std::size_t offset, bool causal) {
  auto [r, c] = row_dims(x, op);
  require_finite(x, op);
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t width = causal ? std::min(c, i + offset + 1) : c;
    const double *row = xd.data() + i * c;
    double *orow = o.data() + i * c;
    double mx = *std::max_element(row, row + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    for (std::size_t j = 0; j < width; ++j) orow[j] /= total;
  }
  bool track = tracking({&x});
  return finish(op, out, track, track ? softmax_backward(x, out, r, c) : Tape::BackwardFn{});
}

}  // namespace

Tensor softmax_rows(const Tensor &x) { return softmax_impl(x, "softmax_rows", 0, false); }

Tensor causal_softmax_rows(const Tensor &x, std::size_t offset) {
  return softmax_impl(x, "causal_softmax_rows", offset, true);
}

Tensor layer_norm(const Tensor &x, const Tensor &gain, const Tensor &bias, double eps) {
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  auto [r, d] = row_dims(x, "layer_norm");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " vs row length " + std::to_string(d));
  }
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(r * d), inv_std(r);
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    const double *row = xd.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      o[i * d + j] = gd[j] * xhat[i * d + j] + bd[j];
    }
  }
  return finish("layer_norm", out, tracking({&x, &gain, &bias}),
                [x, gain, bias, r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    std::span<const double> g) mutable {
                  if (gain.requires_grad()) {
                    auto gg = gain.mutable_grad();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
                  }
                  if (bias.requires_grad()) {
                    auto gb = bias.mutable_grad();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                  }
                  if (!x.requires_grad()) return;
                  auto gx = x.mutable_grad();
                  auto gd = gain.data();
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t i = 0; i < r; ++i) {
                    double mean_dx = 0.0, mean_dx_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxhat = g[i * d + j] * gd[j];
                      mean_dx += dxhat;
                      mean_dx_xhat += dxhat * xhat[i * d + j];
                    }
                    mean_dx *= inv_d;
                    mean_dx_xhat *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxhat = g[i * d + j] * gd[j];
                      gx[i * d + j] += inv_std[i] * (dxhat - mean_dx - xhat[i * d + j] * mean_dx_xhat);
                    }
                  }
                });
}

Tensor max_pool_rows(std::span<const Tensor> xs) {
  if (xs.empty()) throw EmptyInputError("max_pool_rows: no inputs");
  for (const auto &x : xs) require_same_shape(xs.front(), x, "max_pool_rows");
  const auto n = xs.front().numel();
  Tensor out = xs.front().detach();
  std::vector<std::size_t> argmax(n, 0);
  auto o = out.mutable_data();
  for (std::size_t m = 1; m < xs.size(); ++m) {
    auto xd = xs[m].data();
    for (std::size_t i = 0; i < n; ++i) {
      if (xd[i] > o[i]) {
        o[i] = xd[i];
        argmax[i] = m;
      }
    }
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  return finish("max_pool_rows", out, tracking(xs),
                [inputs, argmax = std::move(argmax)](std::span<const double> g) mutable {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    auto &src = inputs[argmax[i]];
                    if (src.requires_grad()) src.mutable_grad()[i] += g[i];
                  }
                });
}

Tensor cross_entropy_rows(const Tensor &p, const Tensor &y) {
  require_same_shape(p, y, "cross_entropy_rows");
  auto [r, c] = row_dims(p, "cross_entropy_rows");
  std::vector<std::size_t> hot(r);
  auto yd = y.data();
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = yd[i * c + j];
      if (v == 1.0) {
        ++ones;
        hot[i] = j;
      } else if (v != 0.0) {
        throw LabelError("cross_entropy_rows: row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (ones != 1) throw LabelError("cross_entropy_rows: row " + std::to_string(i) + " is not one-hot");
  }
  auto pd = p.data();
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    total -= std::log(std::clamp(pd[i * c + hot[i]], kProbClamp, 1.0));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(r));
  return finish("cross_entropy_rows", out, tracking({&p}),
                [p, r, c, hot = std::move(hot)](std::span<const double> g) mutable {
                  auto gp = p.mutable_grad();
                  auto pd = p.data();
                  for (std::size_t i = 0; i < r; ++i) {
                    const double v = pd[i * c + hot[i]];
                    if (v < kProbClamp || v > 1.0) continue;
                    gp[i * c + hot[i]] -= g[0] / (static_cast<double>(r) * v);
                  }
                });
}

Tensor cosine_sim(const Tensor &a, const Tensor &b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("cosine_sim: length mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto ad = a.data();
  auto bd = b.data();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    dot += ad[i] * bd[i];
    na += ad[i] * ad[i];
    nb += bd[i] * bd[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  const double ca = std::max(na, kNormClamp), cb = std::max(nb, kNormClamp);
  Tensor out = Tensor::scalar(dot / (ca * cb));
  return finish("cosine_sim", out, tracking({&a, &b}),
                [a, b, dot, na, nb, ca, cb](std::span<const double> g) mutable {
                  auto ad = a.data();
                  auto bd = b.data();
                  if (a.requires_grad()) {
                    auto ga = a.mutable_grad();
                    const double radial = na > kNormClamp ? dot / (ca * ca * ca * cb) : 0.0;
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * (bd[i] / (ca * cb) - radial * ad[i]);
                  }
                  if (b.requires_grad()) {
                    auto gb = b.mutable_grad();
                    const double radial = nb > kNormClamp ? dot / (cb * cb * cb * ca) : 0.0;
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * (ad[i] / (ca * cb) - radial * bd[i]);
                  }
                });
}

namespace {

struct NormalizedRows {
  std::vector<double> unit;
  std::vector<double> norms;  // unclamped
};

NormalizedRows normalize_rows(std::span<const double> x, std::size_t r, std::size_t c) {
  NormalizedRows out{std::vector<double>(x.begin(), x.end()), std::vector<double>(r)};
  for (std::size_t i = 0; i < r; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < c; ++j) n += x[i * c + j] * x[i * c + j];
    n = std::sqrt(n);
    out.norms[i] = n;
    const double inv = 1.0 / std::max(n, kNormClamp);
    for (std::size_t j = 0; j < c; ++j) out.unit[i * c + j] *= inv;
  }
  return out;
}

// Pulls a gradient w.r.t. unit rows back through the (clamped) normalization.
void normalize_rows_backward(const NormalizedRows &nr, std::span<const double> gunit, std::span<double> gx,
                             std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const double n = nr.norms[i];
    const double inv = 1.0 / std::max(n, kNormClamp);
    double radial = 0.0;
    if (n > kNormClamp) {
      for (std::size_t j = 0; j < c; ++j) radial += nr.unit[i * c + j] * gunit[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += inv * (gunit[i * c + j] - radial * nr.unit[i * c + j]);
  }
}

}  // namespace

Tensor cosine_sim_matrix(const Tensor &a, const Tensor &b) {
  require_rank2(a, "cosine_sim_matrix");
  require_rank2(b, "cosine_sim_matrix");
  if (a.cols() != b.cols()) {
    throw DimensionError("cosine_sim_matrix: length mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const auto n = a.rows(), m = b.rows(), p = a.cols();
  auto na = normalize_rows(a.data(), n, p);
  auto nb = normalize_rows(b.data(), m, p);
  Tensor out = Tensor::zeros({n, m});
  mmap(out.mutable_data(), n, m).noalias() = cmap(na.unit, n, p) * cmap(nb.unit, m, p).transpose();
  return finish("cosine_sim_matrix", out, tracking({&a, &b}),
                [a, b, n, m, p, na = std::move(na), nb = std::move(nb)](std::span<const double> g) mutable {
                  auto G = cmap(g, n, m);
                  if (a.requires_grad()) {
                    std::vector<double> gu(n * p);
                    mmap(gu, n, p).noalias() = G * cmap(nb.unit, m, p);
                    normalize_rows_backward(na, gu, a.mutable_grad(), n, p);
                  }
                  if (b.requires_grad()) {
                    std::vector<double> gu(m * p);
                    mmap(gu, m, p).noalias() = G.transpose() * cmap(na.unit, n, p);
                    normalize_rows_backward(nb, gu, b.mutable_grad(), m, p);
                  }
                });
}

Tensor weighted_logsumexp_rows(const Tensor &s, const Tensor &weights) {
  require_same_shape(s, weights, "weighted_logsumexp_rows");
  auto [r, c] = row_dims(s, "weighted_logsumexp_rows");
  auto sd = s.data();
  auto wd = weights.data();
  Tensor out = Tensor::zeros({r});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double w = wd[i * c + j];
      if (!(w >= 0.0)) throw ParameterError("weighted_logsumexp_rows: negative weight");
      if (w > 0.0) mx = std::max(mx, sd[i * c + j]);
    }
    if (!std::isfinite(mx)) throw ParameterError("weighted_logsumexp_rows: row " + std::to_string(i) + " has no positive weight");
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double w = wd[i * c + j];
      if (w > 0.0) total += w * std::exp(sd[i * c + j] - mx);
    }
    o[i] = mx + std::log(total);
  }
  return finish("weighted_logsumexp_rows", out, tracking({&s}),
                [s, weights, out, r, c](std::span<const double> g) mutable {
                  auto gs = s.mutable_grad();
                  auto sd = s.data();
                  auto wd = weights.data();
                  auto od = out.data();
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      const double w = wd[i * c + j];
                      if (w > 0.0) gs[i * c + j] += g[i] * w * std::exp(sd[i * c + j] - od[i]);
                    }
                });
}

Tensor diagonal(const Tensor &s) {
  require_rank2(s, "diagonal");
  if (s.rows() != s.cols()) throw DimensionError("diagonal: matrix " + shape_str(s.shape()) + " is not square");
  const auto n = s.rows();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = s.at(i, i);
  Tensor out = Tensor::vector(std::move(v));
  return finish("diagonal", out, tracking({&s}), [s, n](std::span<const double> g) mutable {
    auto gs = s.mutable_grad();
    for (std::size_t i = 0; i < n; ++i) gs[i * n + i] += g[i];
  });
}

Tensor sum(const Tensor &x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish("sum", Tensor::scalar(total), tracking({&x}), [x](std::span<const double> g) mutable {
    for (auto &v : x.mutable_grad()) v += g[0];
  });
}

Tensor mean_rows(const Tensor &x) {
  require_rank2(x, "mean_rows");
  const auto r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros({c});
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[j] += xd[i * c + j];
  const double inv = 1.0 / static_cast<double>(r);
  for (auto &v : o) v *= inv;
  return finish("mean_rows", out, tracking({&x}), [x, r, c, inv](std::span<const double> g) mutable {
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j] * inv;
  });
}

Tensor reshape(const Tensor &x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return finish("reshape", out, tracking({&x}), [x](std::span<const double> g) mutable {
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor slice_cols(const Tensor &x, std::size_t start, std::size_t len) {
  require_rank2(x, "slice_cols");
  const auto r = x.rows(), c = x.cols();
  if (len == 0 || start + len > c) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of " + shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros({r, len});
  mmap(out.mutable_data(), r, len) = cmap(x.data(), r, c).middleCols(static_cast<Eigen::Index>(start),
                                                                     static_cast<Eigen::Index>(len));
  return finish("slice_cols", out, tracking({&x}), [x, r, c, start, len](std::span<const double> g) mutable {
    mmap(x.mutable_grad(), r, c).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) +=
        cmap(g, r, len);
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw EmptyInputError("concat_cols: no inputs");
  for (const auto &p : parts) require_rank2(p, "concat_cols");
  const auto r = parts.front().rows();
  std::size_t total = 0;
  for (const auto &p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Tensor out = Tensor::zeros({r, total});
  auto o = mmap(out.mutable_data(), r, total);
  std::size_t at = 0;
  for (const auto &p : parts) {
    o.middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(p.cols())) =
        cmap(p.data(), r, p.cols());
    at += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return finish("concat_cols", out, tracking(parts), [inputs, r, total](std::span<const double> g) mutable {
    auto G = cmap(g, r, total);
    std::size_t at = 0;
    for (auto &p : inputs) {
      const auto c = p.cols();
      if (p.requires_grad()) {
        mmap(p.mutable_grad(), r, c) += G.middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(c));
      }
      at += c;
    }
  });
}

Tensor gather_rows(const Tensor &table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  if (ids.empty()) throw EmptyInputError("gather_rows: no ids");
  const auto v = table.rows(), d = table.cols();
  Tensor out = Tensor::zeros({ids.size(), d});
  auto o = out.mutable_data();
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table " + shape_str(table.shape()));
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, o.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return finish("gather_rows", out, tracking({&table}), [table, idx = std::move(idx), d](std::span<const double> g) mutable {
    auto gt = table.mutable_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw EmptyInputError("stack_rows: no inputs");
  const auto c = rows.front().numel();
  for (const auto &r : rows) {
    if (r.numel() != c) throw DimensionError("stack_rows: length mismatch");
  }
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto &r : rows) data.insert(data.end(), r.data().begin(), r.data().end());
  Tensor out({rows.size(), c}, std::move(data));
  std::vector<Tensor> inputs(rows.begin(), rows.end());
  return finish("stack_rows", out, tracking(rows), [inputs, c](std::span<const double> g) mutable {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      auto gi = inputs[i].mutable_grad();
      for (std::size_t j = 0; j < c; ++j) gi[j] += g[i * c + j];
    }
  });
}

Tensor select_row(const Tensor &x, std::size_t row) {
  require_rank2(x, "select_row");
  if (row >= x.rows()) throw DimensionError("select_row: row " + std::to_string(row) + " of " + shape_str(x.shape()));
  const auto c = x.cols();
  auto xd = x.data();
  Tensor out = Tensor::vector(std::vector<double>(xd.begin() + static_cast<std::ptrdiff_t>(row * c),
                                                  xd.begin() + static_cast<std::ptrdiff_t>((row + 1) * c)));
  return finish("select_row", out, tracking({&x}), [x, row, c](std::span<const double> g) mutable {
    auto gx = x.mutable_grad();
    for (std::size_t j = 0; j < c; ++j) gx[row * c + j] += g[j];
  });
}

Tensor slice_rows(const Tensor &x, std::size_t start, std::size_t len) {
  require_rank2(x, "slice_rows");
  const auto r = x.rows(), c = x.cols();
  if (len == 0 || start + len > r) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of " + shape_str(x.shape()));
  }
  auto xd = x.data();
  Tensor out({len, c}, std::vector<double>(xd.begin() + static_cast<std::ptrdiff_t>(start * c),
                                           xd.begin() + static_cast<std::ptrdiff_t>((start + len) * c)));
  return finish("slice_rows", out, tracking({&x}), [x, start, c](std::span<const double> g) mutable {
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[start * c + i] += g[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw EmptyInputError("concat_rows: no inputs");
  for (const auto &p : parts) require_rank2(p, "concat_rows");
  const auto c = parts.front().cols();
  std::size_t total = 0;
  for (const auto &p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column count mismatch");
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * c);
  for (const auto &p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  Tensor out({total, c}, std::move(data));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return finish("concat_rows", out, tracking(parts), [inputs](std::span<const double> g) mutable {
    std::size_t at = 0;
    for (auto &p : inputs) {
      const auto n = p.numel();
      if (p.requires_grad()) {
        auto gp = p.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[at + i];
      }
      at += n;
    }
  });
}

}  // namespace mscl
