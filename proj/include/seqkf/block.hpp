#pragma once

// Emulation of a blocked hardware datapath for the sequential update.
//
// Operands are split into rasters of P x P blocks (matrices) or arrays of
// length-P blocks (vectors), zero-padded to a multiple of P. Arithmetic runs
// in the scalar type T (float emulates binary32: every primitive rounds).
//
// Reduction order of the inner product, fixed for bit determinism:
//   - per chunk of P elements: element-wise products, then a balanced
//     pairwise adder tree (P rounded up to a power of two with exact zeros),
//     level by level: s[i] = s[2i] + s[2i+1];
//   - chunk results are folded left to right into one accumulator that
//     starts at zero.

#include "seqkf/common.hpp"
#include "seqkf/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace seqkf {

inline Index padded(Index n, Index p) { return (n + p - 1) / p * p; }

inline Index tree_width(Index p) {
  Index w = 1;
  while (w < p) w *= 2;
  return w;
}

template <typename T>
class BlockedVector {
 public:
  BlockedVector() = default;
  BlockedVector(Index size, Index p) : size_(size), p_(p), data_(static_cast<std::size_t>(padded(size, p)), T(0)) {
    if (p < 1) throw ValidationError("degree of parallelization must be >= 1");
  }

  Index size() const { return size_; }
  Index parallelism() const { return p_; }
  Index blocks() const { return static_cast<Index>(data_.size()) / p_; }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  std::span<const T> block(Index b) const { return {data_.data() + b * p_, static_cast<std::size_t>(p_)}; }
  std::span<T> block(Index b) { return {data_.data() + b * p_, static_cast<std::size_t>(p_)}; }
  std::span<const T> padded_data() const { return data_; }

 private:
  Index size_ = 0;
  Index p_ = 1;
  std::vector<T> data_;
};

/// Raster of P x P blocks stored block after block, row-major over the
/// raster and row-major inside each block.
template <typename T>
class BlockedMatrix {
 public:
  BlockedMatrix() = default;
  BlockedMatrix(Index rows, Index cols, Index p)
      : rows_(rows), cols_(cols), p_(p), brows_(padded(rows, p) / p), bcols_(padded(cols, p) / p),
        data_(static_cast<std::size_t>(brows_ * bcols_ * p * p), T(0)) {
    if (p < 1) throw ValidationError("degree of parallelization must be >= 1");
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index parallelism() const { return p_; }
  Index block_rows() const { return brows_; }
  Index block_cols() const { return bcols_; }

  T& operator()(Index i, Index j) { return data_[offset(i, j)]; }
  const T& operator()(Index i, Index j) const { return data_[offset(i, j)]; }

  /// The P contiguous entries of row i that fall in block column bc.
  std::span<const T> row_chunk(Index i, Index bc) const {
    return {data_.data() + offset(i, bc * p_), static_cast<std::size_t>(p_)};
  }
  std::span<T> row_chunk(Index i, Index bc) { return {data_.data() + offset(i, bc * p_), static_cast<std::size_t>(p_)}; }

  std::span<const T> padded_data() const { return data_; }
  std::span<T> padded_data() { return data_; }

 private:
  std::size_t offset(Index i, Index j) const {
    const Index block = (i / p_) * bcols_ + j / p_;
    return static_cast<std::size_t>(block * p_ * p_ + (i % p_) * p_ + j % p_);
  }

  Index rows_ = 0, cols_ = 0, p_ = 1, brows_ = 0, bcols_ = 0;
  std::vector<T> data_;
};

template <typename T, typename Derived>
BlockedMatrix<T> partition(const Eigen::MatrixBase<Derived>& m, Index p) {
  if (p < 1) throw ValidationError("degree of parallelization must be >= 1");
  BlockedMatrix<T> out(m.rows(), m.cols(), p);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out(i, j) = static_cast<T>(m(i, j));
  return out;
}

template <typename T>
BlockedVector<T> partition_vector(const Vector& v, Index p) {
  if (p < 1) throw ValidationError("degree of parallelization must be >= 1");
  BlockedVector<T> out(v.size(), p);
  for (Index i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v(i));
  return out;
}

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> unpartition(const BlockedMatrix<T>& m) {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, 1> unpartition(const BlockedVector<T>& v) {
  Eigen::Matrix<T, Eigen::Dynamic, 1> out(v.size());
  for (Index i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

namespace detail {

/// Multiplier array + balanced adder tree over one chunk of P operands.
template <typename T>
T chunk_dot(std::span<const T> a, std::span<const T> b, std::vector<T>& lanes) {
  const std::size_t p = a.size();
  const std::size_t width = static_cast<std::size_t>(tree_width(static_cast<Index>(p)));
  lanes.assign(width, T(0));
  for (std::size_t i = 0; i < p; ++i) lanes[i] = a[i] * b[i];
  for (std::size_t n = width; n > 1; n /= 2)
    for (std::size_t i = 0; i < n / 2; ++i) lanes[i] = lanes[2 * i] + lanes[2 * i + 1];
  return lanes[0];
}

}  // namespace detail

/// Inner product of two blocked vectors of equal length.
template <typename T>
T inner_product_tree(const BlockedVector<T>& a, const BlockedVector<T>& b) {
  if (a.size() != b.size() || a.parallelism() != b.parallelism())
    throw ValidationError("inner product operands differ in length");
  std::vector<T> lanes;
  T acc(0);
  for (Index c = 0; c < a.blocks(); ++c) acc = acc + detail::chunk_dot<T>(a.block(c), b.block(c), lanes);
  return acc;
}

/// Inner product of plain spans, partitioned on the fly with degree p.
template <typename T>
T inner_product_tree(std::span<const T> a, std::span<const T> b, Index p) {
  if (a.size() != b.size()) throw ValidationError("inner product operands differ in length");
  BlockedVector<T> va(static_cast<Index>(a.size()), p), vb(static_cast<Index>(b.size()), p);
  for (std::size_t i = 0; i < a.size(); ++i) {
    va[static_cast<Index>(i)] = a[i];
    vb[static_cast<Index>(i)] = b[i];
  }
  return inner_product_tree(va, vb);
}

/// Inner product of two double vectors evaluated in the requested precision.
inline double inner_product_tree(const Vector& a, const Vector& b, Index p, Precision prec) {
  if (a.size() != b.size()) throw ValidationError("inner product operands differ in length");
  if (prec == Precision::binary32)
    return inner_product_tree(partition_vector<float>(a, p), partition_vector<float>(b, p));
  return inner_product_tree(partition_vector<double>(a, p), partition_vector<double>(b, p));
}

/// y = M v; each output entry is one inner-product tree over a matrix row.
template <typename T>
BlockedVector<T> matvec_blocked(const BlockedMatrix<T>& m, const BlockedVector<T>& v) {
  if (m.cols() != v.size() || m.parallelism() != v.parallelism())
    throw ValidationError("matrix-vector dimension mismatch");
  BlockedVector<T> out(m.rows(), m.parallelism());
  std::vector<T> lanes;
  for (Index i = 0; i < m.rows(); ++i) {
    T acc(0);
    for (Index c = 0; c < m.block_cols(); ++c) acc = acc + detail::chunk_dot<T>(m.row_chunk(i, c), v.block(c), lanes);
    out[i] = acc;
  }
  return out;
}

inline Vector matvec_blocked(const Matrix& m, const Vector& v, Index p, Precision prec) {
  if (m.cols() != v.size()) throw ValidationError("matrix-vector dimension mismatch");
  if (prec == Precision::binary32)
    return unpartition(matvec_blocked(partition<float>(m, p), partition_vector<float>(v, p))).cast<double>();
  return unpartition(matvec_blocked(partition<double>(m, p), partition_vector<double>(v, p)));
}

// Element-wise primitives.

/// y = y + a (or y - a when subtract).
template <typename T>
void add_in_place(BlockedVector<T>& y, const BlockedVector<T>& a, bool subtract = false) {
  for (Index i = 0; i < y.size(); ++i) y[i] = subtract ? y[i] - a[i] : y[i] + a[i];
}

/// y = s * v.
template <typename T>
BlockedVector<T> scale(const BlockedVector<T>& v, T s) {
  BlockedVector<T> out(v.size(), v.parallelism());
  for (Index i = 0; i < v.size(); ++i) out[i] = v[i] * s;
  return out;
}

/// u v^T.
template <typename T>
BlockedMatrix<T> outer_product(const BlockedVector<T>& u, const BlockedVector<T>& v) {
  BlockedMatrix<T> out(u.size(), v.size(), u.parallelism());
  for (Index i = 0; i < u.size(); ++i)
    for (Index j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
  return out;
}

/// m = m - a.
template <typename T>
void subtract_in_place(BlockedMatrix<T>& m, const BlockedMatrix<T>& a) {
  auto dst = m.padded_data();
  auto src = a.padded_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] - src[i];
}

// ---------------------------------------------------------------------------
// Blocked sequential filter

/// Predict + sequential update executed through the blocked primitives in
/// scalar type T. H, R and Q are partitioned once and reused every step.
template <typename T>
class BlockedSdkf {
 public:
  BlockedSdkf(const Matrix& h, const Vector& r_diag, const Vector& q, Index p)
      : p_(p), s_(h.cols()), d_(h.rows()), h_(partition<T>(h, p)), r_(partition_vector<T>(r_diag, p)),
        q_(partition_vector<T>(q, p)) {
    if (r_diag.size() != d_ || q.size() != s_) throw ValidationError("R / Q do not match H");
  }

  void reset(const FilterState& state) {
    if (state.x.size() != s_ || state.p.rows() != s_ || state.p.cols() != s_)
      throw ValidationError("state does not match H");
    x_ = partition_vector<T>(state.x, p_);
    pm_ = partition<T>(state.p, p_);
    k_ = state.k;
  }

  /// One predict + D scalar updates.
  void step(const Vector& z) {
    if (z.size() != d_) throw ValidationError("measurement vector length must equal D");
    for (Index i = 0; i < s_; ++i) pm_(i, i) = pm_(i, i) + q_[i];
    BlockedVector<T> row(s_, p_);
    for (Index m = 0; m < d_; ++m) {
      for (Index j = 0; j < s_; ++j) row[j] = h_(m, j);
      const BlockedVector<T> dtz = matvec_blocked(pm_, row);  // P h^T
      const T w = r_[m] + inner_product_tree(dtz, row);
      if (!(w > T(0)))
        throw HypothesisViolation("non-positive innovation variance at step " + std::to_string(k_ + 1) +
                                  ", measurement " + std::to_string(m));
      const T w_inv = T(1) / w;
      const BlockedVector<T> gain = scale(dtz, w_inv);
      const T dz = static_cast<T>(z(m)) - inner_product_tree(row, x_);
      add_in_place(x_, scale(gain, dz));
      subtract_in_place(pm_, outer_product(gain, dtz));
    }
    for (Index i = 0; i < s_; ++i)
      for (Index j = i + 1; j < s_; ++j) {
        const T avg = (pm_(i, j) + pm_(j, i)) * T(0.5);
        pm_(i, j) = avg;
        pm_(j, i) = avg;
      }
    ++k_;
  }

  FilterState state() const {
    FilterState s;
    s.x = unpartition(x_).template cast<double>();
    s.p = unpartition(pm_).template cast<double>();
    s.phase = EstimatePhase::a_posteriori;
    s.k = k_;
    return s;
  }

 private:
  Index p_, s_, d_;
  BlockedMatrix<T> h_;
  BlockedVector<T> r_, q_;
  BlockedVector<T> x_;
  BlockedMatrix<T> pm_;
  long k_ = 0;
};

/// One predict + sequential-update cycle through the blocked datapath.
inline FilterState sdkf_step_blocked(const FilterState& state, const MeasurementFrame& frame, const Vector& q,
                                     Index p, Precision prec) {
  if (!frame.r_is_diagonal()) throw ValidationError("sequential update requires a diagonal R");
  if (state.phase != EstimatePhase::a_posteriori) throw ValidationError("blocked step starts from an a-posteriori state");
  auto run = [&](auto tag) {
    using T = decltype(tag);
    BlockedSdkf<T> f(frame.h, frame.r.diagonal(), q, p);
    f.reset(state);
    f.step(frame.z);
    return f.state();
  };
  return prec == Precision::binary32 ? run(float{}) : run(double{});
}

// ---------------------------------------------------------------------------
// Cost, memory and resource models

/// words(S = D = 255, P = 1): the largest square problem that fits.
inline constexpr long long kDefaultBudgetWords = 2LL * 255 * 255 + 6LL * 255 + 2;

struct ArithBlock {
  double throughput = 1.0;  // results per cycle
  int latency = 1;          // cycles
  int dsp = 0;              // DSP slices per block
};

struct ArithConfig {
  ArithBlock add{1.0, 5, 2};
  ArithBlock mul{1.0, 2, 3};
  ArithBlock sum{1.0, 20, 9};
  ArithBlock div{1.0, 20, 8};
  long long budget_words = kDefaultBudgetWords;

  void validate() const {
    for (const ArithBlock* b : {&add, &mul, &sum, &div})
      if (!(b->throughput > 0) || b->latency < 1 || b->dsp < 0) throw ValidationError("invalid arithmetic block configuration");
    if (budget_words < 1) throw ValidationError("memory budget must be >= 1 word");
  }

  /// Latency of the scalar chain mul -> sum tree -> divide -> add -> mul.
  long long scalar_chain_latency() const { return mul.latency + sum.latency + div.latency + add.latency + mul.latency; }
};

struct CycleCost {
  long long total_cycles = 0;
  std::vector<std::pair<std::string, long long>> breakdown;
};

/// Cycle model with B = ceil(S/P):
///   per measurement: 3 B^2 (dTz, dP, P update) + 4 B (vector ops) + chain latency,
///   total = D * per-measurement + B + add latency (prediction).
/// Block-op cycles are divided by the slowest block throughput (1 by default).
inline CycleCost cycle_cost(long long s, long long d, long long p, const ArithConfig& cfg = {}) {
  if (s < 1 || d < 1 || p < 1) throw ValidationError("S, D and P must be >= 1");
  cfg.validate();
  const long long b = (s + p - 1) / p;
  const double t = std::min({cfg.add.throughput, cfg.mul.throughput, cfg.sum.throughput, cfg.div.throughput});
  auto issue = [t](long long ops) { return static_cast<long long>(std::ceil(static_cast<double>(ops) / t)); };
  CycleCost c;
  c.breakdown = {{"prediction", issue(b) + cfg.add.latency},
                 {"matrix_ops", d * issue(3 * b * b)},
                 {"vector_ops", d * issue(4 * b)},
                 {"scalar_latency", d * cfg.scalar_chain_latency()}};
  for (const auto& [name, v] : c.breakdown) c.total_cycles += v;
  return c;
}

struct MemoryFootprint {
  long long words = 0;
  long long separate_memories_required = 0;
  bool feasible = false;
};

/// Stored operands: Q, R, H, z, dTz, K, x, P, W^-1, zhat, each padded to P.
inline MemoryFootprint memory_footprint(long long s, long long d, long long p,
                                        long long budget_words = kDefaultBudgetWords) {
  if (s < 1 || d < 1 || p < 1) throw ValidationError("S, D and P must be >= 1");
  const long long ps = padded(s, p), pd = padded(d, p);
  MemoryFootprint m;
  m.words = ps /*Q*/ + pd /*R*/ + pd * ps /*H*/ + pd /*z*/ + ps /*dTz*/ + ps /*K*/ + ps /*x*/ + ps * ps /*P*/ + 2;
  m.separate_memories_required = p * p;
  m.feasible = m.words <= budget_words;
  return m;
}

/// Approximate DSP usage: P^2 multiplier-adders, P inner-product units
/// (P multipliers + one sum tree each) and one divider.
inline long long resource_estimate(long long p, const ArithConfig& cfg = {}) {
  if (p < 1) throw ValidationError("P must be >= 1");
  cfg.validate();
  return p * p * (cfg.mul.dsp + cfg.add.dsp) + p * (p * cfg.mul.dsp + cfg.sum.dsp) + cfg.div.dsp;
}

}  // namespace seqkf
