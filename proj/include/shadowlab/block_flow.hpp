#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace shadowlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One diagonal block of a block-linear vector field: either a real 1x1 rate
// or a 2x2 spiral [[a,-b],[b,a]] (eigenvalues a +- ib).
struct Block {
  enum class Kind { Real1D, Spiral2D };
  Kind kind = Kind::Real1D;
  double rate = 0.0;  // Real1D rate, or spiral radial rate a
  double spin = 0.0;  // spiral angular rate b (unused for Real1D)

  static Block real(double rate) { return Block{Kind::Real1D, rate, 0.0}; }
  static Block spiral(double a, double b) { return Block{Kind::Spiral2D, a, b}; }

  int dim() const { return kind == Kind::Real1D ? 1 : 2; }
};

// Linear field x' = A x with A block-diagonal over the given blocks.
class BlockLinearField {
 public:
  BlockLinearField() = default;
  explicit BlockLinearField(std::vector<Block> blocks);

  int dim() const { return dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  bool empty() const { return blocks_.empty(); }

  Mat matrix() const;
  Vec field(const Vec& x) const;  // A x

  // Extremes of Re(lambda) over the spectrum; zero rates for an empty field.
  double max_real_rate() const;
  double min_real_rate() const;
  // Largest eigenvalue modulus |a + ib|.
  double spectral_radius() const;

  // Offset of block b in the coordinate layout.
  int block_offset(std::size_t b) const { return offsets_[b]; }

 private:
  std::vector<Block> blocks_;
  std::vector<int> offsets_;
  int dim_ = 0;
};

// Exact flow of a block-linear field: Real1D evolves as x e^{rate t}, Spiral2D
// as e^{a t} times rotation by b t. Exactness makes long-window probing cheap
// and free of integration error.
Vec evolve_block(const BlockLinearField& field, double t, const Vec& x);

// In-place variant for hot loops; x must have field.dim() entries.
void evolve_block_inplace(const BlockLinearField& field, double t, Eigen::Ref<Vec> x);

// General autonomous field for the RK4 reference integrator.
struct VectorFieldFn {
  int dim = 0;
  std::function<Vec(const Vec&)> eval;
};

VectorFieldFn as_vector_field(const BlockLinearField& field);

// Classical fixed-step RK4. Integrates to exactly |t| using uniform steps of
// at most `step` (the final partial step is shortened). Throws StepBudgetError
// when more than max_steps steps would be needed and ModelError on non-finite
// field values.
Vec evolve_rk4(const VectorFieldFn& field, double t, const Vec& x, double step,
               long max_steps = 100000000L);

}  // namespace shadowlab
