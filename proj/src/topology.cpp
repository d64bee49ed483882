#include "hxalloc/topology.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace hxalloc {

SwitchCoord::SwitchCoord(std::vector<int> coords) : q_(static_cast<int>(coords.size())) {
  if (q_ > kMaxDimensions) {
    throw ShapeError("coordinate has " + std::to_string(q_) + " dimensions, at most " +
                     std::to_string(kMaxDimensions) + " supported");
  }
  std::copy(coords.begin(), coords.end(), c_.begin());
}

bool SwitchCoord::operator==(const SwitchCoord& o) const {
  return q_ == o.q_ && std::equal(c_.begin(), c_.begin() + q_, o.c_.begin());
}

std::strong_ordering SwitchCoord::operator<=>(const SwitchCoord& o) const {
  if (auto c = q_ <=> o.q_; c != 0) return c;
  // Most significant dimension first so ordering follows linear ids.
  for (int d = q_ - 1; d >= 0; --d) {
    if (auto c = c_[d] <=> o.c_[d]; c != 0) return c;
  }
  return std::strong_ordering::equal;
}

std::string SwitchCoord::to_string() const {
  std::ostringstream os;
  os << '(';
  for (int d = q_ - 1; d >= 0; --d) {
    os << c_[d];
    if (d > 0) os << ',';
  }
  os << ')';
  return os.str();
}

void NetworkShape::validate() const {
  if (q < 1 || q > kMaxDimensions) throw ShapeError("dimension count q out of range");
  if (n < 1) throw ShapeError("side n must be at least 1");
  if (concentration < 1) throw ShapeError("concentration must be at least 1");
}

int NetworkShape::switch_count() const {
  int count = 1;
  for (int d = 0; d < q; ++d) count *= n;
  return count;
}

bool NetworkShape::contains(const SwitchCoord& s) const {
  if (s.dimensions() != q) return false;
  for (int d = 0; d < q; ++d) {
    if (s[d] < 0 || s[d] >= n) return false;
  }
  return true;
}

SwitchId NetworkShape::switch_id(const SwitchCoord& s) const {
  if (!contains(s)) throw ShapeError("switch coordinate " + s.to_string() + " outside shape");
  SwitchId id = 0;
  for (int d = q - 1; d >= 0; --d) id = id * n + s[d];
  return id;
}

SwitchCoord NetworkShape::coord(SwitchId id) const {
  if (id < 0 || id >= switch_count()) throw ShapeError("switch id out of range");
  std::vector<int> c(q);
  for (int d = 0; d < q; ++d) {
    c[d] = id % n;
    id /= n;
  }
  return SwitchCoord(std::move(c));
}

EndpointId endpoint_id(const NetworkShape& shape, const EndpointAddr& e) {
  if (e.offset < 0 || e.offset >= shape.concentration) throw ShapeError("endpoint offset out of range");
  return shape.switch_id(e.sw) * shape.concentration + e.offset;
}

EndpointAddr endpoint_addr(const NetworkShape& shape, EndpointId id) {
  if (id < 0 || id >= shape.endpoint_count()) throw ShapeError("endpoint id out of range");
  return {shape.coord(id / shape.concentration), id % shape.concentration};
}

int hamming_distance(const SwitchCoord& a, const SwitchCoord& b) {
  if (a.dimensions() != b.dimensions()) throw ShapeError("mismatched coordinate dimensionality");
  int d = 0;
  for (int i = 0; i < a.dimensions(); ++i) d += a[i] != b[i];
  return d;
}

int hamming_distance(const NetworkShape& shape, SwitchId a, SwitchId b) {
  int d = 0;
  for (int i = 0; i < shape.q; ++i) {
    d += (a % shape.n) != (b % shape.n);
    a /= shape.n;
    b /= shape.n;
  }
  return d;
}

std::vector<SwitchCoord> neighbors(const SwitchCoord& s, const NetworkShape& shape) {
  if (!shape.contains(s)) throw ShapeError("switch coordinate " + s.to_string() + " outside shape");
  std::vector<SwitchCoord> out;
  out.reserve(static_cast<std::size_t>(shape.network_ports()));
  for (int d = 0; d < shape.q; ++d) {
    for (int v = 0; v < shape.n; ++v) {
      if (v == s[d]) continue;
      SwitchCoord t = s;
      t[d] = v;
      out.push_back(t);
    }
  }
  return out;
}

double theoretical_avg_distance(const NetworkShape& shape) {
  return shape.q - static_cast<double>(shape.q) / shape.n;
}

std::int64_t link_count(const NetworkShape& shape) {
  std::int64_t switches = shape.switch_count();
  return static_cast<std::int64_t>(shape.q) * (shape.n - 1) * switches / 2;
}

std::vector<std::vector<SwitchCoord>> minimal_paths(const SwitchCoord& a, const SwitchCoord& b) {
  if (a.dimensions() != b.dimensions()) throw ShapeError("mismatched coordinate dimensionality");
  std::vector<int> unaligned;
  for (int d = 0; d < a.dimensions(); ++d) {
    if (a[d] != b[d]) unaligned.push_back(d);
  }
  std::vector<std::vector<SwitchCoord>> paths;
  // permutations of the unaligned dimensions, in lexicographic order
  do {
    std::vector<SwitchCoord> path{a};
    SwitchCoord cur = a;
    for (int d : unaligned) {
      cur[d] = b[d];
      path.push_back(cur);
    }
    paths.push_back(std::move(path));
  } while (std::next_permutation(unaligned.begin(), unaligned.end()));
  return paths;
}

Link Link::between(const NetworkShape& shape, SwitchId a, SwitchId b) {
  int dim = -1;
  SwitchId x = a, y = b;
  for (int d = 0; d < shape.q; ++d) {
    if (x % shape.n != y % shape.n) {
      if (dim >= 0) throw ShapeError("switches are not adjacent");
      dim = d;
    }
    x /= shape.n;
    y /= shape.n;
  }
  if (dim < 0) throw ShapeError("a link needs two distinct switches");
  return {std::min(a, b), std::max(a, b), dim};
}

std::vector<Link> all_links(const NetworkShape& shape) {
  std::vector<Link> links;
  links.reserve(static_cast<std::size_t>(link_count(shape)));
  const int switches = shape.switch_count();
  int stride = 1;
  std::vector<int> strides(shape.q);
  for (int d = 0; d < shape.q; ++d) {
    strides[d] = stride;
    stride *= shape.n;
  }
  for (SwitchId s = 0; s < switches; ++s) {
    for (int d = 0; d < shape.q; ++d) {
      int cd = (s / strides[d]) % shape.n;
      for (int v = cd + 1; v < shape.n; ++v) {
        links.push_back({s, s + (v - cd) * strides[d], d});
      }
    }
  }
  std::sort(links.begin(), links.end());
  return links;
}

}  // namespace hxalloc
