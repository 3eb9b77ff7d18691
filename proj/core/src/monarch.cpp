#include "moncirc/monarch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "moncirc/error.hpp"

namespace moncirc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t product(std::span<const std::size_t> v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

}  // namespace

bool DenseWeights::row_stochastic(double tol) const {
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    if (std::abs(w.row(k).sum() - 1.0) > tol) return false;
  }
  return true;
}

MonarchFactorization::MonarchFactorization(std::vector<std::size_t> in_dims,
                                           std::vector<std::size_t> out_dims)
    : in_(std::move(in_dims)), out_(std::move(out_dims)) {
  require(!in_.empty() && in_.size() == out_.size(), ErrorKind::Dimension,
          "monarch factorization needs matching non-empty dim lists, got in=" + dims_string(in_) +
              " out=" + dims_string(out_));
  for (std::size_t t = 0; t < in_.size(); ++t) {
    require(in_[t] > 0 && out_[t] > 0, ErrorKind::Dimension, "monarch dims must be positive");
  }
  const std::size_t d = in_.size();
  batch_.resize(d);
  layers_.resize(d);
  for (std::size_t t = 0; t < d; ++t) {
    std::size_t r = 1;
    for (std::size_t s = t + 1; s < d; ++s) r *= in_[s];
    for (std::size_t s = 0; s < t; ++s) r *= out_[s];
    batch_[t] = r;
    layers_[t].assign(r * out_[t] * in_[t], 0.0);
  }
}

MonarchFactorization MonarchFactorization::identity(std::vector<std::size_t> dims) {
  MonarchFactorization f(dims, dims);
  for (std::size_t t = 0; t < f.depth(); ++t) {
    for (std::size_t r = 0; r < f.batch_[t]; ++r) {
      for (std::size_t j = 0; j < dims[t]; ++j) f.at(t, j, j, r) = 1.0;
    }
  }
  f.tied_ = true;
  return f;
}

MonarchFactorization MonarchFactorization::kronecker(std::span<const Eigen::MatrixXd> kernels) {
  std::vector<std::size_t> in, out;
  for (const auto& k : kernels) {
    out.push_back(static_cast<std::size_t>(k.rows()));
    in.push_back(static_cast<std::size_t>(k.cols()));
  }
  MonarchFactorization f(in, out);
  for (std::size_t t = 0; t < f.depth(); ++t) {
    const auto& k = kernels[t];
    for (std::size_t r = 0; r < f.batch_[t]; ++r) {
      auto s = f.slice(t, r);
      for (std::size_t j = 0; j < out[t]; ++j) {
        for (std::size_t i = 0; i < in[t]; ++i) {
          s[j * in[t] + i] = k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        }
      }
    }
  }
  f.tied_ = true;
  return f;
}

std::size_t MonarchFactorization::input_size() const { return product(in_); }
std::size_t MonarchFactorization::output_size() const { return product(out_); }

std::span<double> MonarchFactorization::slice(std::size_t t, std::size_t r) {
  const std::size_t n = out_[t] * in_[t];
  return std::span<double>(layers_[t]).subspan(r * n, n);
}

std::span<const double> MonarchFactorization::slice(std::size_t t, std::size_t r) const {
  const std::size_t n = out_[t] * in_[t];
  return std::span<const double>(layers_[t]).subspan(r * n, n);
}

std::size_t MonarchFactorization::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.size();
  return n;
}

bool MonarchFactorization::row_stochastic(double tol) const {
  for (std::size_t t = 0; t < depth(); ++t) {
    const auto& l = layers_[t];
    for (std::size_t row = 0; row < batch_[t] * out_[t]; ++row) {
      double s = 0.0;
      for (std::size_t i = 0; i < in_[t]; ++i) s += l[row * in_[t] + i];
      if (std::abs(s - 1.0) > tol) return false;
    }
  }
  return true;
}

bool MonarchFactorization::non_negative() const {
  for (const auto& l : layers_) {
    for (double v : l) {
      if (!(v >= 0.0)) return false;
    }
  }
  return true;
}

std::vector<double> monarch_apply(const MonarchFactorization& fact, std::span<const double> x) {
  require(x.size() == fact.input_size(), ErrorKind::Dimension,
          "monarch_apply: input has " + std::to_string(x.size()) + " entries, expected " +
              std::to_string(fact.input_size()));
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t t = 0; t < fact.depth(); ++t) {
    const std::size_t m = fact.layer_out(t), n = fact.layer_in(t), R = fact.layer_batch(t);
    std::vector<double> next(R * m, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      auto a = fact.slice(t, r);
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a[j * n + i] * cur[i * R + r];
        next[r * m + j] = acc;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> monarch_apply_logspace(const MonarchFactorization& fact,
                                           std::span<const double> log_x) {
  require(log_x.size() == fact.input_size(), ErrorKind::Dimension,
          "monarch_apply_logspace: input has " + std::to_string(log_x.size()) +
              " entries, expected " + std::to_string(fact.input_size()));
  std::vector<double> cur(log_x.begin(), log_x.end());
  std::vector<double> shifted;
  for (std::size_t t = 0; t < fact.depth(); ++t) {
    const std::size_t m = fact.layer_out(t), n = fact.layer_in(t), R = fact.layer_batch(t);
    std::vector<double> next(R * m, kNegInf);
    shifted.resize(n);
    for (std::size_t r = 0; r < R; ++r) {
      double mx = kNegInf;
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, cur[i * R + r]);
      if (mx == kNegInf) continue;
      for (std::size_t i = 0; i < n; ++i) shifted[i] = std::exp(cur[i * R + r] - mx);
      auto a = fact.slice(t, r);
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a[j * n + i] * shifted[i];
        next[r * m + j] = acc > 0.0 ? mx + std::log(acc) : kNegInf;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

DenseWeights materialize(const MonarchFactorization& fact) {
  const std::size_t rows = fact.output_size(), cols = fact.input_size();
  require(rows * cols <= kMaterializeLimit, ErrorKind::Refusal,
          "materialize: " + std::to_string(rows) + "x" + std::to_string(cols) +
              " exceeds the materialization limit");
  const std::size_t d = fact.depth();
  const auto& in = fact.in_dims();
  const auto& out = fact.out_dims();
  DenseWeights result{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(cols))};
  std::vector<std::size_t> jd(d), id(d);
  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t t = d, rem = row; t-- > 0;) {
      jd[t] = rem % out[t];
      rem /= out[t];
    }
    for (std::size_t col = 0; col < cols; ++col) {
      for (std::size_t t = d, rem = col; t-- > 0;) {
        id[t] = rem % in[t];
        rem /= in[t];
      }
      double v = 1.0;
      for (std::size_t t = 0; t < d && v != 0.0; ++t) {
        // batch index r = (i_{t+1}, ..., i_{d-1}, j_0, ..., j_{t-1}) row-major
        std::size_t r = 0;
        for (std::size_t s = t + 1; s < d; ++s) r = r * in[s] + id[s];
        for (std::size_t s = 0; s < t; ++s) r = r * out[s] + jd[s];
        v *= fact.at(t, jd[t], id[t], r);
      }
      result.w(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = v;
    }
  }
  return result;
}

namespace {

bool is_power_of_two(std::size_t h) { return h && !(h & (h - 1)); }

std::vector<std::size_t> prime_factors(std::size_t h) {
  std::vector<std::size_t> f;
  for (std::size_t p = 2; p * p <= h; ++p) {
    while (h % p == 0) {
      f.push_back(p);
      h /= p;
    }
  }
  if (h > 1) f.push_back(h);
  return f;
}

}  // namespace

DimSchedule plan_schedule(std::size_t hidden, std::size_t depth) {
  require(hidden >= 4, ErrorKind::Planning,
          "plan_schedule: hidden size must be >= 4, got " + std::to_string(hidden));
  require(depth >= 1, ErrorKind::Planning, "plan_schedule: depth must be >= 1");
  DimSchedule s;
  s.hidden = hidden;
  if (depth == 1) {
    s.dims = {hidden};
  } else if (is_power_of_two(hidden)) {
    std::size_t k = 0;
    while ((std::size_t{1} << k) < hidden) ++k;
    require(depth <= k, ErrorKind::Planning,
            "plan_schedule: depth " + std::to_string(depth) + " exceeds log2(" +
                std::to_string(hidden) + ")");
    const std::size_t q = k / depth, rem = k % depth;
    for (std::size_t t = 0; t < depth; ++t) {
      s.dims.push_back(std::size_t{1} << (q + (t >= depth - rem ? 1 : 0)));
    }
  } else {
    auto primes = prime_factors(hidden);
    require(depth <= primes.size(), ErrorKind::Planning,
            "plan_schedule: " + std::to_string(hidden) + " has fewer than " +
                std::to_string(depth) + " prime factors");
    std::sort(primes.rbegin(), primes.rend());
    s.dims.assign(depth, 1);
    for (std::size_t p : primes) {
      *std::min_element(s.dims.begin(), s.dims.end()) *= p;
    }
    std::sort(s.dims.begin(), s.dims.end());
  }
  s.base = *std::max_element(s.dims.begin(), s.dims.end());
  return s;
}

DimSchedule plan_schedule_base(std::size_t hidden, std::size_t base) {
  require(hidden >= 4, ErrorKind::Planning,
          "plan_schedule: hidden size must be >= 4, got " + std::to_string(hidden));
  require(base >= 2, ErrorKind::Planning, "plan_schedule: base must be >= 2");
  DimSchedule s;
  s.hidden = hidden;
  s.base = base;
  std::size_t p = 1;
  while (p < hidden) {
    p *= base;
    s.dims.push_back(base);
  }
  require(p == hidden, ErrorKind::Planning,
          "plan_schedule: " + std::to_string(hidden) + " is not a power of base " +
              std::to_string(base));
  return s;
}

DimSchedule plan_schedule_dims(std::size_t hidden, std::vector<std::size_t> dims) {
  require(!dims.empty(), ErrorKind::Planning, "plan_schedule: empty dims");
  for (std::size_t d : dims) require(d >= 1, ErrorKind::Planning, "plan_schedule: zero dim");
  require(product(dims) == hidden, ErrorKind::Planning,
          "plan_schedule: dims " + dims_string(dims) + " do not multiply to " +
              std::to_string(hidden));
  DimSchedule s;
  s.hidden = hidden;
  s.base = *std::max_element(dims.begin(), dims.end());
  s.dims = std::move(dims);
  return s;
}

MonarchFactorization make_monarch(const DimSchedule& schedule) {
  return MonarchFactorization(schedule.dims, schedule.dims);
}

std::uint64_t dense_flops(std::uint64_t out, std::uint64_t in) { return out * in; }

std::uint64_t flops_per_apply(const DimSchedule& schedule) {
  // Square layers: layer t touches m_t * n_t * batch_t = h * dims[t] edges.
  std::uint64_t total = 0;
  for (std::size_t d : schedule.dims) total += static_cast<std::uint64_t>(schedule.hidden) * d;
  return total;
}

std::uint64_t flops_per_apply(const MonarchFactorization& fact) {
  return static_cast<std::uint64_t>(fact.parameter_count());
}

MemoryElements memory_elements(ModelKind kind, std::uint64_t hidden, std::uint64_t seq_len,
                               std::uint64_t batch, std::uint64_t depth) {
  require(hidden > 0 && seq_len > 0 && batch > 0, ErrorKind::Contract,
          "memory_elements: hidden size, sequence length and batch size must be positive");
  if (kind == ModelKind::Dense) {
    return {hidden * hidden, seq_len * hidden * batch};
  }
  require(depth >= 1, ErrorKind::Contract, "memory_elements: depth must be positive");
  const auto schedule = plan_schedule(static_cast<std::size_t>(hidden), static_cast<std::size_t>(depth));
  return {flops_per_apply(schedule), depth * seq_len * hidden * batch};
}

}  // namespace moncirc
