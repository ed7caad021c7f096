#include "bdlab/site.hpp"

#include <stdexcept>

namespace bdlab {

std::string format_site(const Site& s, int dim) {
  std::string out;
  for (int i = 0; i < dim; ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

Box::Box(int dim, Site lo, Site hi) : dim_(dim), lo_(lo), hi_(hi) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("box dimension must be in 1..3");
  for (int i = 0; i < kMaxDim; ++i) {
    if (i >= dim) {
      lo_[i] = hi_[i] = 0;
    } else if (hi_[i] < lo_[i]) {
      throw std::invalid_argument("box must be nonempty");
    }
  }
}

Box Box::centered_radius(int dim, std::int32_t radius) {
  if (radius < 0) throw std::invalid_argument("box radius must be non-negative");
  Site lo{}, hi{};
  for (int i = 0; i < dim; ++i) {
    lo[i] = -radius;
    hi[i] = radius;
  }
  return Box(dim, lo, hi);
}

Box Box::centered_side(int dim, std::int32_t side) {
  if (side < 1) throw std::invalid_argument("box side must be positive");
  Site lo{}, hi{};
  for (int i = 0; i < dim; ++i) {
    lo[i] = -((side - 1) / 2);
    hi[i] = lo[i] + side - 1;
  }
  return Box(dim, lo, hi);
}

std::size_t Box::size() const noexcept {
  std::size_t n = 1;
  for (int i = 0; i < dim_; ++i) n *= static_cast<std::size_t>(extent(i));
  return n;
}

Site Box::site_at(std::size_t index) const noexcept {
  Site s{};
  for (int i = 0; i < dim_; ++i) {
    const auto e = static_cast<std::size_t>(extent(i));
    s[i] = lo_[i] + static_cast<std::int32_t>(index % e);
    index /= e;
  }
  return s;
}

Box Box::expanded(std::int32_t margin) const {
  Site lo = lo_, hi = hi_;
  for (int i = 0; i < dim_; ++i) {
    lo[i] -= margin;
    hi[i] += margin;
  }
  return Box(dim_, lo, hi);
}

Site Box::wrap(const Site& s) const noexcept {
  Site w = s;
  for (int i = 0; i < dim_; ++i) {
    const std::int32_t e = extent(i);
    std::int32_t r = (s[i] - lo_[i]) % e;
    if (r < 0) r += e;
    w[i] = lo_[i] + r;
  }
  return w;
}

std::vector<Site> Box::sites() const {
  std::vector<Site> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(site_at(i));
  return out;
}

}  // namespace bdlab
