#pragma once

// Scalar reference implementations used only by tests. Plain nested loops
// over vector-of-vector matrices, no Tensor/Graph machinery, kept
// independent of the library code paths they check.

#include <cmath>
#include <cstddef>
#include <vector>

#include "comatch/attention.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t m, std::size_t n) { return Mat(m, std::vector<double>(n, 0.0)); }

inline Mat to_mat(const comatch::Tensor& t) {
  Mat out = zeros(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
  return out;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::fabs(a[i][j] - b[i][j]));
  return worst;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out = zeros(a.empty() ? 0 : a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[j][i] = a[i][j];
  return out;
}

inline Mat add_rowvec(const Mat& a, const std::vector<double>& b) {
  if (b.empty()) return a;
  Mat out = a;
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return out;
}

inline double squash(comatch::Squash s, double v) {
  switch (s) {
    case comatch::Squash::Tanh: return std::tanh(v);
    case comatch::Squash::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case comatch::Squash::Arctan: return std::atan(v);
  }
  return 0.0;
}

inline double mean_of(const Mat& a) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& row : a)
    for (double v : row) {
      s += v;
      ++n;
    }
  return s / static_cast<double>(n);
}

// E, raw N, normalized N, and M for already-projected inputs, following the
// full composition pipeline with scale factors supplied by the caller.
struct PipelineOut {
  Mat e, n_raw, n_norm, m;
};

inline PipelineOut pipeline(const Mat& pe_a, const Mat& pe_b, const Mat& pn_a, const Mat& pn_b,
                            double e_scale, double n_scale, const comatch::AttentionConfig& cfg) {
  const std::size_t m = pe_a.size(), n = pe_b.size();
  PipelineOut out;
  out.e = zeros(m, n);
  out.n_raw = zeros(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0, l1 = 0.0;
      for (std::size_t k = 0; k < pe_a[i].size(); ++k) dot += pe_a[i][k] * pe_b[j][k];
      for (std::size_t k = 0; k < pn_a[i].size(); ++k) l1 += std::fabs(pn_a[i][k] - pn_b[j][k]);
      out.e[i][j] = e_scale * dot;
      out.n_raw[i][j] = -n_scale * l1;
    }
  out.n_norm = out.n_raw;
  if (cfg.variant == comatch::NormVariant::CenterN) {
    const double mu = mean_of(out.n_raw);
    for (auto& row : out.n_norm)
      for (double& v : row) v -= mu;
  }
  Mat e2 = out.e;
  if (cfg.variant == comatch::NormVariant::CenterE) {
    const double mu = mean_of(out.e);
    for (auto& row : e2)
      for (double& v : row) v -= mu;
  }
  out.m = zeros(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double gate = squash(cfg.f_n, out.n_norm[i][j]);
      if (cfg.variant == comatch::NormVariant::TwoSigmoid) gate *= 2.0;
      out.m[i][j] = squash(cfg.f_e, e2[i][j]) * gate;
    }
  return out;
}

struct AttendOut {
  Mat a_hat, b_hat;
  PipelineOut pipe;
};

// Standalone cross-attention: project both sides, run the pipeline with
// alpha on E and beta/sqrt(d_k) on N, then pool a_hat = M b, b_hat = M^T a.
inline AttendOut attend(const Mat& a, const Mat& b, const Mat& w_e, const Mat& w_n,
                        const comatch::AttentionConfig& cfg) {
  const double dk = static_cast<double>(w_e[0].size());
  AttendOut out;
  out.pipe = pipeline(matmul(a, w_e), matmul(b, w_e), matmul(a, w_n), matmul(b, w_n), cfg.alpha,
                      cfg.beta / std::sqrt(dk), cfg);
  out.a_hat = matmul(out.pipe.m, b);
  out.b_hat = matmul(transpose(out.pipe.m), a);
  return out;
}

inline Mat softmax_rows(const Mat& x) {
  Mat out = x;
  for (auto& row : out) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return out;
}

struct HeadWeights {
  Mat wq, wk, wv;
  std::vector<double> bq, bk, bv;
};

// Multi-head mixed attention over one sequence: first n_combined heads use
// the combined matrix (masked columns zeroed, masked entries excluded from
// centering means), the rest use masked softmax; concat then output map.
inline Mat mixed_heads(const Mat& q, const Mat& k, const Mat& v,
                       const std::vector<HeadWeights>& heads, const Mat& wo,
                       const std::vector<double>& bo, const comatch::AttentionConfig& cfg,
                       std::size_t n_combined, const std::vector<double>& mask) {
  const std::size_t n = q.size();
  Mat merged = zeros(n, 0);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    Mat qh = add_rowvec(matmul(q, heads[h].wq), heads[h].bq);
    Mat kh = add_rowvec(matmul(k, heads[h].wk), heads[h].bk);
    Mat vh = add_rowvec(matmul(v, heads[h].wv), heads[h].bv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(qh[0].size()));
    Mat weights;
    if (h < n_combined) {
      PipelineOut p;
      // masked centering mean: valid entries only
      const std::size_t m = qh.size(), nn = kh.size();
      p.e = zeros(m, nn);
      p.n_raw = zeros(m, nn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nn; ++j) {
          double dot = 0.0, l1 = 0.0;
          for (std::size_t t = 0; t < qh[i].size(); ++t) {
            dot += qh[i][t] * kh[j][t];
            l1 += std::fabs(qh[i][t] - kh[j][t]);
          }
          p.e[i][j] = cfg.alpha * inv_sqrt * dot;
          p.n_raw[i][j] = -cfg.beta * inv_sqrt * l1;
        }
      auto masked_mean = [&](const Mat& x) {
        double s = 0.0, c = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < nn; ++j) {
            const bool ok = mask.empty() || (mask[i] != 0.0 && mask[j] != 0.0);
            if (ok) {
              s += x[i][j];
              c += 1.0;
            }
          }
        return c == 0.0 ? 0.0 : s / c;
      };
      p.n_norm = p.n_raw;
      if (cfg.variant == comatch::NormVariant::CenterN) {
        const double mu = masked_mean(p.n_raw);
        for (auto& row : p.n_norm)
          for (double& x : row) x -= mu;
      }
      Mat e2 = p.e;
      if (cfg.variant == comatch::NormVariant::CenterE) {
        const double mu = masked_mean(p.e);
        for (auto& row : e2)
          for (double& x : row) x -= mu;
      }
      weights = zeros(m, nn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nn; ++j) {
          double gate = squash(cfg.f_n, p.n_norm[i][j]);
          if (cfg.variant == comatch::NormVariant::TwoSigmoid) gate *= 2.0;
          weights[i][j] = squash(cfg.f_e, e2[i][j]) * gate;
          if (!mask.empty() && mask[j] == 0.0) weights[i][j] = 0.0;
        }
    } else {
      Mat scores = zeros(qh.size(), kh.size());
      for (std::size_t i = 0; i < qh.size(); ++i)
        for (std::size_t j = 0; j < kh.size(); ++j) {
          double dot = 0.0;
          for (std::size_t t = 0; t < qh[i].size(); ++t) dot += qh[i][t] * kh[j][t];
          scores[i][j] = inv_sqrt * dot;
          if (!mask.empty() && mask[j] == 0.0) scores[i][j] += -1e9;
        }
      weights = softmax_rows(scores);
    }
    Mat head_out = matmul(weights, vh);
    for (std::size_t i = 0; i < n; ++i)
      merged[i].insert(merged[i].end(), head_out[i].begin(), head_out[i].end());
  }
  return add_rowvec(matmul(merged, wo), bo);
}

}  // namespace oracle
