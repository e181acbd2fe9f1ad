#pragma once

#include "errors.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace chcds {

//! Paired covariates (row-major, `dim` columns) and responses.
class Dataset
{
public:
  Dataset() = default;

  explicit Dataset(std::size_t dim)
    : dim_(dim)
  {
    if (dim == 0)
      throw ConfigError("covariate dimension must be at least 1");
  }

  Dataset(std::size_t dim, std::vector<double> x, std::vector<double> y)
    : dim_(dim)
    , x_(std::move(x))
    , y_(std::move(y))
  {
    if (dim == 0)
      throw ConfigError("covariate dimension must be at least 1");
    if (x_.size() != y_.size() * dim_)
      throw DataError("covariate matrix shape does not match response length");
  }

  std::size_t size() const { return y_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return y_.empty(); }

  std::span<const double> x(std::size_t i) const
  {
    return { x_.data() + i * dim_, dim_ };
  }
  double y(std::size_t i) const { return y_[i]; }

  std::span<const double> responses() const { return y_; }
  std::span<const double> covariates() const { return x_; }

  //! Column `j` of the covariate matrix.
  std::vector<double> covariate_column(std::size_t j) const
  {
    std::vector<double> col(size());
    for (std::size_t i = 0; i < size(); ++i)
      col[i] = x_[i * dim_ + j];
    return col;
  }

  void push_back(std::span<const double> xi, double yi)
  {
    if (xi.size() != dim_)
      throw DataError("row has " + std::to_string(xi.size()) +
                      " covariates, expected " + std::to_string(dim_));
    x_.insert(x_.end(), xi.begin(), xi.end());
    y_.push_back(yi);
  }

  //! Rows [first, first + count).
  Dataset slice(std::size_t first, std::size_t count) const
  {
    Dataset out(dim_);
    out.x_.assign(x_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                  x_.begin() + static_cast<std::ptrdiff_t>((first + count) * dim_));
    out.y_.assign(y_.begin() + static_cast<std::ptrdiff_t>(first),
                  y_.begin() + static_cast<std::ptrdiff_t>(first + count));
    return out;
  }

  Dataset subset(std::span<const std::size_t> rows) const
  {
    Dataset out(dim_);
    for (std::size_t r : rows)
      out.push_back(x(r), y(r));
    return out;
  }

private:
  std::size_t dim_ = 1;
  std::vector<double> x_;
  std::vector<double> y_;
};

//! Consecutive train / calibration / test split of one sample.
struct Split
{
  Dataset train;
  Dataset calibration;
  Dataset test;
};

inline Split
split_consecutive(const Dataset& data, std::size_t n_train, std::size_t n_cal)
{
  if (n_train + n_cal > data.size())
    throw ConfigError("split sizes exceed dataset size");
  return { data.slice(0, n_train),
           data.slice(n_train, n_cal),
           data.slice(n_train + n_cal, data.size() - n_train - n_cal) };
}

} // namespace chcds
