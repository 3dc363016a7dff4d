#include "shadowlab/block_flow.hpp"

#include <cmath>
#include <limits>

#include "shadowlab/errors.hpp"

namespace shadowlab {

BlockLinearField::BlockLinearField(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size());
  for (const Block& b : blocks_) {
    if (!std::isfinite(b.rate) || !std::isfinite(b.spin))
      throw ModelError("block rates must be finite");
    offsets_.push_back(dim_);
    dim_ += b.dim();
  }
}

Mat BlockLinearField::matrix() const {
  Mat a = Mat::Zero(dim_, dim_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    int o = offsets_[i];
    if (b.kind == Block::Kind::Real1D) {
      a(o, o) = b.rate;
    } else {
      a(o, o) = b.rate;
      a(o, o + 1) = -b.spin;
      a(o + 1, o) = b.spin;
      a(o + 1, o + 1) = b.rate;
    }
  }
  return a;
}

Vec BlockLinearField::field(const Vec& x) const {
  if (x.size() != dim_) throw ModelError("field: dimension mismatch");
  Vec out(dim_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    int o = offsets_[i];
    if (b.kind == Block::Kind::Real1D) {
      out(o) = b.rate * x(o);
    } else {
      out(o) = b.rate * x(o) - b.spin * x(o + 1);
      out(o + 1) = b.spin * x(o) + b.rate * x(o + 1);
    }
  }
  return out;
}

double BlockLinearField::max_real_rate() const {
  double m = 0.0;
  bool first = true;
  for (const Block& b : blocks_) {
    m = first ? b.rate : std::max(m, b.rate);
    first = false;
  }
  return m;
}

double BlockLinearField::min_real_rate() const {
  double m = 0.0;
  bool first = true;
  for (const Block& b : blocks_) {
    m = first ? b.rate : std::min(m, b.rate);
    first = false;
  }
  return m;
}

double BlockLinearField::spectral_radius() const {
  double m = 0.0;
  for (const Block& b : blocks_) m = std::max(m, std::hypot(b.rate, b.spin));
  return m;
}

void evolve_block_inplace(const BlockLinearField& field, double t, Eigen::Ref<Vec> x) {
  if (x.size() != field.dim()) throw ModelError("evolve_block: dimension mismatch");
  if (t == 0.0) return;
  const auto& blocks = field.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    int o = field.block_offset(i);
    double g = std::exp(b.rate * t);
    if (b.kind == Block::Kind::Real1D) {
      x(o) *= g;
    } else {
      double c = std::cos(b.spin * t), s = std::sin(b.spin * t);
      double u = x(o), v = x(o + 1);
      x(o) = g * (c * u - s * v);
      x(o + 1) = g * (s * u + c * v);
    }
  }
}

Vec evolve_block(const BlockLinearField& field, double t, const Vec& x) {
  Vec y = x;
  evolve_block_inplace(field, t, y);
  return y;
}

VectorFieldFn as_vector_field(const BlockLinearField& field) {
  return VectorFieldFn{field.dim(), [field](const Vec& x) { return field.field(x); }};
}

Vec evolve_rk4(const VectorFieldFn& field, double t, const Vec& x, double step,
               long max_steps) {
  if (x.size() != field.dim) throw ModelError("evolve_rk4: dimension mismatch");
  if (!(step > 0.0)) throw ModelError("evolve_rk4: step must be positive");
  if (t == 0.0) return x;
  double total = std::abs(t);
  long nsteps = static_cast<long>(std::ceil(total / step - 1e-12));
  if (nsteps > max_steps) throw StepBudgetError("evolve_rk4: step budget exceeded");
  double sign = t > 0.0 ? 1.0 : -1.0;
  Vec y = x;
  double done = 0.0;
  for (long i = 0; i < nsteps; ++i) {
    double h = std::min(step, total - done);
    double hs = sign * h;
    Vec k1 = field.eval(y);
    Vec k2 = field.eval(y + (hs / 2) * k1);
    Vec k3 = field.eval(y + (hs / 2) * k2);
    Vec k4 = field.eval(y + hs * k3);
    y += (hs / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    done += h;
    if (!y.allFinite()) throw ModelError("evolve_rk4: non-finite state");
  }
  return y;
}

}  // namespace shadowlab
