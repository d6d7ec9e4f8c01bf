// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "newsrec/error.hpp"

namespace newsrec::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap cmap(const Tensor& t, std::size_t r, std::size_t c) {
  return CMap(t.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MMap mmap(Tensor& t, std::size_t r, std::size_t c) {
  return MMap(t.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_rank2(const Var& v, const char* op) {
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::vector<std::size_t> copy_offsets(Offsets offsets, std::size_t rows, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows) {
    throw DimensionError(std::string(op) + ": offsets do not cover " + std::to_string(rows) +
                         " rows");
  }
  for (std::size_t s = 1; s < offsets.size(); ++s) {
    if (offsets[s] < offsets[s - 1]) throw DimensionError(std::string(op) + ": offsets decrease");
  }
  return {offsets.begin(), offsets.end()};
}

template <class F>
Var unary(Var a, F&& fwd_deriv, const char* name) {
  // fwd_deriv(x) -> pair(y, dy/dx evaluated from x and y)
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd_deriv(x[i]).first;
  y.check_finite(name);
  const Tensor* xp = &a.value();
  return a.tape()->record(std::move(y), {a},
                          [xp, fwd_deriv](const Tensor&, const Tensor& g,
                                          std::span<Tensor* const> gi) {
                            Tensor& ga = *gi[0];
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] * fwd_deriv((*xp)[i]).second;
                          });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  if (m && n && k) mmap(out, m, n).noalias() = cmap(a.value(), m, k) * cmap(b.value(), k, n);
  const Tensor* ap = &a.value();
  const Tensor* bp = &b.value();
  return a.tape()->record(std::move(out), {a, b},
                          [ap, bp, m, k, n](const Tensor&, const Tensor& g,
                                            std::span<Tensor* const> gi) {
                            if (!m || !n || !k) return;
                            auto gm = cmap(g, m, n);
                            if (gi[0]) mmap(*gi[0], m, k).noalias() += gm * cmap(*bp, k, n).transpose();
                            if (gi[1]) mmap(*gi[1], k, n).noalias() += cmap(*ap, m, k).transpose() * gm;
                          });
}

Var matvec(Var a, Var v) {
  require_rank2(a, "matvec");
  if (v.value().rank() != 1 || v.shape()[0] != a.shape()[1]) {
    throw DimensionError("matvec: " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
  }
  return reshape(matmul(a, reshape(v, Shape{v.shape()[0], 1})), Shape{a.shape()[0]});
}

Var transpose(Var a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out(Shape{c, r});
  if (r && c) mmap(out, c, r) = cmap(a.value(), r, c).transpose();
  return a.tape()->record(std::move(out), {a},
                          [r, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            if (r && c) mmap(*gi[0], r, c) += cmap(g, c, r).transpose();
                          });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape()->record(std::move(out), {a},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            auto& ga = gi[0]->values();
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                          });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape()->record(std::move(out), {a, b},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            for (auto* t : gi)
                              if (t)
                                for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
                          });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape()->record(std::move(out), {a, b},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                          });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Tensor* ap = &a.value();
  const Tensor* bp = &b.value();
  return a.tape()->record(std::move(out), {a, b},
                          [ap, bp](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * (*bp)[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * (*ap)[i];
                          });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& x : out.values()) x *= factor;
  return a.tape()->record(std::move(out), {a},
                          [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * factor;
                          });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (auto& x : out.values()) x += c;
  return a.tape()->record(std::move(out), {a},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                          });
}

Var add_bias(Var a, Var bias) {
  const std::size_t n = bias.value().size();
  if (bias.value().rank() != 1 || a.value().cols() != n || a.value().rank() == 0) {
    throw DimensionError("add_bias: " + shape_str(a.shape()) + " + " + shape_str(bias.shape()));
  }
  Tensor out = a.value();
  const std::size_t rows = out.size() / std::max<std::size_t>(n, 1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias.value()[j];
  return a.tape()->record(std::move(out), {a, bias},
                          [rows, n](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < n; ++j) (*gi[1])[j] += g[r * n + j];
                          });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (auto& x : out.values()) x = std::tanh(x);
  return a.tape()->record(std::move(out), {a},
                          [](const Tensor& y, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t i = 0; i < g.size(); ++i)
                              (*gi[0])[i] += g[i] * (1.0 - y[i] * y[i]);
                          });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (auto& x : out.values()) x = 1.0 / (1.0 + std::exp(-x));
  return a.tape()->record(std::move(out), {a},
                          [](const Tensor& y, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t i = 0; i < g.size(); ++i)
                              (*gi[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                          });
}

Var relu(Var a) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : a.value().values()) h = (h ^ static_cast<std::uint64_t>(x > 0)) * 0x100000001b3ULL;
  a.tape()->note_branches(h);
  return unary(
      a, [](double x) { return std::pair{x > 0 ? x : 0.0, x > 0 ? 1.0 : 0.0}; }, "relu");
}

Var gelu(Var a) {
  return unary(
      a,
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return std::pair{x * cdf, cdf + x * pdf};
      },
      "gelu");
}

Var softmax(Var x) {
  const Tensor& in = x.value();
  if (in.rank() == 0 || in.cols() == 0) throw DimensionError("softmax over an empty axis");
  const std::size_t n = in.cols(), rows = in.size() / n;
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = in.data() + r * n;
    double* yi = out.data() + r * n;
    const double mx = *std::max_element(xi, xi + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (yi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yi[j] /= total;
  }
  out.check_finite("softmax");
  return x.tape()->record(std::move(out), {x},
                          [rows, n](const Tensor& y, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              double s = 0.0;
                              for (std::size_t j = 0; j < n; ++j) s += g[r * n + j] * y[r * n + j];
                              for (std::size_t j = 0; j < n; ++j)
                                (*gi[0])[r * n + j] += y[r * n + j] * (g[r * n + j] - s);
                            }
                          });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& in = x.value();
  const std::size_t d = in.cols();
  if (d < 2 || gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: " + shape_str(x.shape()) + " with gain " +
                         shape_str(gain.shape()));
  }
  const std::size_t rows = in.size() / d;
  auto xhat = std::make_shared<Tensor>(in.shape());
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gain.value()[j] * h + bias.value()[j];
    }
  }
  const Tensor* gp = &gain.value();
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [xhat, inv_sigma, gp, rows, d](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const double inv_d = 1.0 / static_cast<double>(d);
        std::vector<double> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* h = xhat->data() + r * d;
          const double* gr = g.data() + r * d;
          if (gi[1])
            for (std::size_t j = 0; j < d; ++j) (*gi[1])[j] += gr[j] * h[j];
          if (gi[2])
            for (std::size_t j = 0; j < d; ++j) (*gi[2])[j] += gr[j];
          if (!gi[0]) continue;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dh[j] = gr[j] * (*gp)[j];
            mean_dh += dh[j];
            mean_dh_h += dh[j] * h[j];
          }
          mean_dh *= inv_d;
          mean_dh_h *= inv_d;
          for (std::size_t j = 0; j < d; ++j)
            (*gi[0])[r * d + j] += (*inv_sigma)[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
        }
      });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  require_rank2(table, "embedding_lookup");
  const auto vocab = static_cast<long long>(table.shape()[0]);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw IndexError("embedding id " + std::to_string(id) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
  }
  return gather_rows(table, ids);
}

Var gather_rows(Var x, std::span<const int> idx) {
  const Tensor& in = x.value();
  if (in.rank() != 2) throw DimensionError("gather_rows: expected a matrix");
  const std::size_t d = in.shape()[1];
  const auto n = static_cast<long long>(in.shape()[0]);
  Tensor out(Shape{idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < -1 || idx[i] >= n) {
      throw IndexError("gather_rows index " + std::to_string(idx[i]) + " out of range");
    }
    if (idx[i] < 0) continue;
    std::copy_n(in.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> ids(idx.begin(), idx.end());
  return x.tape()->record(std::move(out), {x},
                          [ids = std::move(ids), d](const Tensor&, const Tensor& g,
                                                    std::span<Tensor* const> gi) {
                            for (std::size_t i = 0; i < ids.size(); ++i) {
                              if (ids[i] < 0) continue;
                              double* dst = gi[0]->data() + static_cast<std::size_t>(ids[i]) * d;
                              const double* src = g.data() + i * d;
                              for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                            }
                          });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.shape()[0] != rows) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out(Shape{rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.data() + r * widths[k], widths[k], out.data() + r * total + off);
    off += widths[k];
  }
  return parts[0].tape()->record(
      std::move(out), std::vector<Var>(parts.begin(), parts.end()),
      [widths, rows, total](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < gi.size(); ++k) {
          if (gi[k])
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j)
                (*gi[k])[r * widths[k] + j] += g[r * total + off + j];
          off += widths[k];
        }
      });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin > end || end > cols) throw DimensionError("slice_cols: bad range");
  const std::size_t w = end - begin;
  Tensor out(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.value().data() + r * cols + begin, w, out.data() + r * w);
  return x.tape()->record(std::move(out), {x},
                          [rows, cols, begin, w](const Tensor&, const Tensor& g,
                                                 std::span<Tensor* const> gi) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < w; ++j)
                                (*gi[0])[r * cols + begin + j] += g[r * w + j];
                          });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows of nothing");
  const std::size_t d = rows[0].value().size();
  for (const auto& r : rows)
    if (r.value().size() != d) throw DimensionError("stack_rows: row sizes differ");
  Tensor out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(rows[i].value().data(), d, out.data() + i * d);
  return rows[0].tape()->record(std::move(out), std::vector<Var>(rows.begin(), rows.end()),
                                [d](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                                  for (std::size_t i = 0; i < gi.size(); ++i)
                                    if (gi[i])
                                      for (std::size_t j = 0; j < d; ++j) (*gi[i])[j] += g[i * d + j];
                                });
}

Var row(Var x, std::size_t i) {
  require_rank2(x, "row");
  const std::size_t d = x.shape()[1];
  if (i >= x.shape()[0]) throw IndexError("row index out of range");
  Tensor out(Shape{d});
  std::copy_n(x.value().data() + i * d, d, out.data());
  return x.tape()->record(std::move(out), {x},
                          [i, d](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t j = 0; j < d; ++j) (*gi[0])[i * d + j] += g[j];
                          });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return a.tape()->record(Tensor::scalar(s), {a},
                          [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            for (auto& x : gi[0]->values()) x += g[0];
                          });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var dot(Var a, Var b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
  const Tensor* ap = &a.value();
  const Tensor* bp = &b.value();
  return a.tape()->record(Tensor::scalar(s), {a, b},
                          [ap, bp](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < ap->size(); ++i) (*gi[0])[i] += g[0] * (*bp)[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < ap->size(); ++i) (*gi[1])[i] += g[0] * (*ap)[i];
                          });
}

Var dropout(Var x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0, 1)");
  Tape* tape = x.tape();
  if (!tape->training() || rate == 0.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (auto& m : *mask) m = keep(tape->rng()) ? s : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return tape->record(std::move(out), {x},
                      [mask](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                        for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * (*mask)[i];
                      });
}

Var listwise_loss(Var scores, std::size_t label) {
  const Tensor& s = scores.value();
  if (s.rank() != 1 || s.size() == 0) throw DimensionError("listwise_loss expects a score vector");
  if (label >= s.size()) {
    throw IndexError("listwise_loss label " + std::to_string(label) + " outside " +
                     std::to_string(s.size()) + " candidates");
  }
  const double mx = *std::max_element(s.values().begin(), s.values().end());
  auto probs = std::make_shared<std::vector<double>>(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += ((*probs)[i] = std::exp(s[i] - mx));
  for (auto& p : *probs) p /= total;
  const double loss = -(s[label] - mx - std::log(total));
  if (!std::isfinite(loss)) throw NumericalError("listwise_loss is not finite");
  return scores.tape()->record(Tensor::scalar(loss), {scores},
                               [probs, label](const Tensor&, const Tensor& g,
                                              std::span<Tensor* const> gi) {
                                 for (std::size_t i = 0; i < probs->size(); ++i)
                                   (*gi[0])[i] += g[0] * ((*probs)[i] - (i == label ? 1.0 : 0.0));
                               });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  require_rank2(logits, "cross_entropy_rows");
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != n || n == 0) throw DimensionError("cross_entropy_rows: target count");
  auto probs = std::make_shared<Tensor>(logits.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw IndexError("cross_entropy_rows target out of range");
    }
    const double* x = logits.value().data() + r * v;
    double* p = probs->data() + r * v;
    const double mx = *std::max_element(x, x + v);
    double total = 0.0;
    for (std::size_t j = 0; j < v; ++j) total += (p[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < v; ++j) p[j] /= total;
    loss += -(x[targets[r]] - mx - std::log(total));
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericalError("cross entropy is not finite");
  std::vector<int> t(targets.begin(), targets.end());
  return logits.tape()->record(
      Tensor::scalar(loss), {logits},
      [probs, t = std::move(t), n, v](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const double s = g[0] / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < v; ++j)
            (*gi[0])[r * v + j] +=
                s * ((*probs)[r * v + j] - (static_cast<int>(j) == t[r] ? 1.0 : 0.0));
      });
}

Var segment_softmax(Var x, Offsets offsets) {
  const Tensor& in = x.value();
  if (in.rank() != 1) throw DimensionError("segment_softmax expects a rank-1 input");
  auto off = copy_offsets(offsets, in.size(), "segment_softmax");
  Tensor out(in.shape());
  for (std::size_t s = 0; s + 1 < off.size(); ++s) {
    const std::size_t b = off[s], e = off[s + 1];
    if (b == e) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = b; i < e; ++i) mx = std::max(mx, in[i]);
    double total = 0.0;
    for (std::size_t i = b; i < e; ++i) total += (out[i] = std::exp(in[i] - mx));
    for (std::size_t i = b; i < e; ++i) out[i] /= total;
  }
  out.check_finite("segment_softmax");
  return x.tape()->record(std::move(out), {x},
                          [off](const Tensor& y, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                              double dotp = 0.0;
                              for (std::size_t i = off[s]; i < off[s + 1]; ++i) dotp += g[i] * y[i];
                              for (std::size_t i = off[s]; i < off[s + 1]; ++i)
                                (*gi[0])[i] += y[i] * (g[i] - dotp);
                            }
                          });
}

Var segment_weighted_sum(Var w, Var r, Offsets offsets) {
  require_rank2(r, "segment_weighted_sum");
  const std::size_t p = r.shape()[0], d = r.shape()[1];
  if (w.value().rank() != 1 || w.value().size() != p) {
    throw DimensionError("segment_weighted_sum: weights do not match rows");
  }
  auto off = copy_offsets(offsets, p, "segment_weighted_sum");
  const std::size_t segs = off.size() - 1;
  Tensor out(Shape{segs, d});
  for (std::size_t s = 0; s < segs; ++s)
    for (std::size_t i = off[s]; i < off[s + 1]; ++i)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += w.value()[i] * r.value()[i * d + j];
  const Tensor* wp = &w.value();
  const Tensor* rp = &r.value();
  return w.tape()->record(std::move(out), {w, r},
                          [off, wp, rp, d](const Tensor&, const Tensor& g,
                                           std::span<Tensor* const> gi) {
                            for (std::size_t s = 0; s + 1 < off.size(); ++s)
                              for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
                                const double* gr = g.data() + s * d;
                                if (gi[0]) {
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j < d; ++j) acc += gr[j] * (*rp)[i * d + j];
                                  (*gi[0])[i] += acc;
                                }
                                if (gi[1])
                                  for (std::size_t j = 0; j < d; ++j)
                                    (*gi[1])[i * d + j] += gr[j] * (*wp)[i];
                              }
                          });
}

Var segment_mean(Var r, Offsets offsets, bool skip_first) {
  require_rank2(r, "segment_mean");
  const std::size_t p = r.shape()[0], d = r.shape()[1];
  auto off = copy_offsets(offsets, p, "segment_mean");
  const std::size_t segs = off.size() - 1;
  // Effective [begin, end) per segment.
  std::vector<std::pair<std::size_t, std::size_t>> span(segs);
  for (std::size_t s = 0; s < segs; ++s) {
    std::size_t b = off[s], e = off[s + 1];
    if (b == e) throw DimensionError("segment_mean over an empty segment");
    if (skip_first && e - b > 1) ++b;
    span[s] = {b, e};
  }
  Tensor out(Shape{segs, d});
  for (std::size_t s = 0; s < segs; ++s) {
    const double inv = 1.0 / static_cast<double>(span[s].second - span[s].first);
    for (std::size_t i = span[s].first; i < span[s].second; ++i)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += r.value()[i * d + j];
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] *= inv;
  }
  return r.tape()->record(std::move(out), {r},
                          [span, d](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                            for (std::size_t s = 0; s < span.size(); ++s) {
                              const double inv =
                                  1.0 / static_cast<double>(span[s].second - span[s].first);
                              for (std::size_t i = span[s].first; i < span[s].second; ++i)
                                for (std::size_t j = 0; j < d; ++j)
                                  (*gi[0])[i * d + j] += g[s * d + j] * inv;
                            }
                          });
}

Var segment_rowdot(Var a, Var q, Offsets offsets) {
  require_rank2(a, "segment_rowdot");
  require_rank2(q, "segment_rowdot");
  const std::size_t p = a.shape()[0], d = a.shape()[1];
  auto off = copy_offsets(offsets, p, "segment_rowdot");
  if (q.shape()[0] != off.size() - 1 || q.shape()[1] != d) {
    throw DimensionError("segment_rowdot: query shape " + shape_str(q.shape()));
  }
  Tensor out(Shape{p});
  for (std::size_t s = 0; s + 1 < off.size(); ++s)
    for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += a.value()[i * d + j] * q.value()[s * d + j];
      out[i] = acc;
    }
  const Tensor* ap = &a.value();
  const Tensor* qp = &q.value();
  return a.tape()->record(std::move(out), {a, q},
                          [off, ap, qp, d](const Tensor&, const Tensor& g,
                                           std::span<Tensor* const> gi) {
                            for (std::size_t s = 0; s + 1 < off.size(); ++s)
                              for (std::size_t i = off[s]; i < off[s + 1]; ++i)
                                for (std::size_t j = 0; j < d; ++j) {
                                  if (gi[0]) (*gi[0])[i * d + j] += g[i] * (*qp)[s * d + j];
                                  if (gi[1]) (*gi[1])[s * d + j] += g[i] * (*ap)[i * d + j];
                                }
                          });
}

Var multihead_attention(Var q, Var k, Var v, Offsets offsets, std::size_t heads,
                        std::vector<Tensor>* probs) {
  require_rank2(q, "multihead_attention");
  require_same_shape(q, k, "multihead_attention");
  require_same_shape(q, v, "multihead_attention");
  const std::size_t p = q.shape()[0], d = q.shape()[1];
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("multihead_attention: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  auto off = copy_offsets(offsets, p, "multihead_attention");
  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  // Attention weights per segment, laid out [head][query][key].
  auto weights = std::make_shared<std::vector<std::vector<double>>>(off.size() - 1);
  Tensor out(Shape{p, d});
  for (std::size_t s = 0; s + 1 < off.size(); ++s) {
    const std::size_t b = off[s], len = off[s + 1] - off[s];
    auto& a = (*weights)[s];
    a.assign(heads * len * len, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dk;
      for (std::size_t i = 0; i < len; ++i) {
        double* ai = a.data() + (h * len + i) * len;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < dk; ++c) acc += Q[(b + i) * d + c0 + c] * K[(b + j) * d + c0 + c];
          ai[j] = acc * inv_sqrt;
          mx = std::max(mx, ai[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) total += (ai[j] = std::exp(ai[j] - mx));
        for (std::size_t j = 0; j < len; ++j) ai[j] /= total;
        for (std::size_t j = 0; j < len; ++j)
          for (std::size_t c = 0; c < dk; ++c) out[(b + i) * d + c0 + c] += ai[j] * V[(b + j) * d + c0 + c];
      }
    }
    if (probs) probs->emplace_back(Shape{heads, len, len}, a);
  }
  out.check_finite("multihead_attention");
  const Tensor* qp = &Q;
  const Tensor* kp = &K;
  const Tensor* vp = &V;
  return q.tape()->record(
      std::move(out), {q, k, v},
      [off, weights, qp, kp, vp, heads, dk, d, inv_sqrt](const Tensor&, const Tensor& g,
                                                        std::span<Tensor* const> gi) {
        std::vector<double> da;
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          const std::size_t b = off[s], len = off[s + 1] - off[s];
          const auto& a = (*weights)[s];
          da.assign(len, 0.0);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dk;
            for (std::size_t i = 0; i < len; ++i) {
              const double* ai = a.data() + (h * len + i) * len;
              const double* gi_row = g.data() + (b + i) * d + c0;
              // dA_ij = gout_i . V_j ; dV_j += A_ij gout_i
              double dot_sum = 0.0;
              for (std::size_t j = 0; j < len; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < dk; ++c) acc += gi_row[c] * (*vp)[(b + j) * d + c0 + c];
                da[j] = acc;
                dot_sum += acc * ai[j];
                if (gi[2])
                  for (std::size_t c = 0; c < dk; ++c) (*gi[2])[(b + j) * d + c0 + c] += ai[j] * gi_row[c];
              }
              for (std::size_t j = 0; j < len; ++j) {
                const double ds = ai[j] * (da[j] - dot_sum) * inv_sqrt;
                if (ds == 0.0) continue;
                if (gi[0])
                  for (std::size_t c = 0; c < dk; ++c)
                    (*gi[0])[(b + i) * d + c0 + c] += ds * (*kp)[(b + j) * d + c0 + c];
                if (gi[1])
                  for (std::size_t c = 0; c < dk; ++c)
                    (*gi[1])[(b + j) * d + c0 + c] += ds * (*qp)[(b + i) * d + c0 + c];
              }
            }
          }
        }
      });
}

}  // namespace newsrec::ops
