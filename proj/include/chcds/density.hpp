#pragma once

#include "grid.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace chcds {

//! A fitted conditional density f(y | x). Implementations are immutable
//! after construction and safe to evaluate from several threads.
class ConditionalDensity
{
public:
  virtual ~ConditionalDensity() = default;

  virtual double density(double y, std::span<const double> x) const = 0;

  //! f(grid[k] | x) for every node. Estimators override this with a
  //! vectorized path; the result must agree with density() pointwise.
  virtual void density_on_grid(std::span<const double> x,
                               const ResponseGrid& grid,
                               std::span<double> out) const
  {
    for (std::size_t k = 0; k < grid.size(); ++k)
      out[k] = density(grid[k], x);
  }

  std::vector<double> density_on_grid(std::span<const double> x,
                                      const ResponseGrid& grid) const
  {
    std::vector<double> out(grid.size());
    density_on_grid(x, grid, out);
    return out;
  }

  virtual ResponseRange response_range() const = 0;
  virtual std::size_t covariate_dim() const = 0;

  //! Estimator name and hyperparameters as a JSON object.
  virtual std::string describe() const = 0;
};

} // namespace chcds
