// HyperX (Hamming graph) topology: shape, coordinates, adjacency and
// minimal paths.
//
// Dimension 0 is the least significant coordinate (x), dimension 1 is y.
// Switches are linearized row-major, s = s_y * n + s_x, and endpoints as
// switch * concentration + offset.

#ifndef HXALLOC_TOPOLOGY_HPP
#define HXALLOC_TOPOLOGY_HPP

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hxalloc {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kMaxDimensions = 8;

using SwitchId = int;
using EndpointId = int;

class SwitchCoord {
 public:
  SwitchCoord() = default;
  explicit SwitchCoord(std::vector<int> coords);

  /// Builds a 2D coordinate from (s_y, s_x), the order used by the
  /// allocation functions.
  static SwitchCoord yx(int y, int x) { return SwitchCoord({x, y}); }

  int dimensions() const { return q_; }
  int operator[](int dim) const { return c_[dim]; }
  int& operator[](int dim) { return c_[dim]; }
  int x() const { return c_[0]; }
  int y() const { return c_[1]; }

  bool operator==(const SwitchCoord& o) const;
  std::strong_ordering operator<=>(const SwitchCoord& o) const;
  std::string to_string() const;

 private:
  std::array<int, kMaxDimensions> c_{};
  int q_ = 0;
};

struct NetworkShape {
  int q = 2;
  int n = 8;
  int concentration = 8;

  /// Well-balanced 2D HyperX: concentration equals the side.
  static NetworkShape hyperx2d(int n) { return {2, n, n}; }

  void validate() const;
  int switch_count() const;
  int endpoint_count() const { return switch_count() * concentration; }
  int network_ports() const { return q * (n - 1); }

  SwitchId switch_id(const SwitchCoord& s) const;
  SwitchCoord coord(SwitchId id) const;
  bool contains(const SwitchCoord& s) const;

  bool operator==(const NetworkShape&) const = default;
};

struct EndpointAddr {
  SwitchCoord sw;
  int offset = 0;

  auto operator<=>(const EndpointAddr&) const = default;
};

EndpointId endpoint_id(const NetworkShape& shape, const EndpointAddr& e);
EndpointAddr endpoint_addr(const NetworkShape& shape, EndpointId id);
inline SwitchId endpoint_switch(const NetworkShape& shape, EndpointId id) {
  return id / shape.concentration;
}

int hamming_distance(const SwitchCoord& a, const SwitchCoord& b);
/// Same metric on linear switch ids.
int hamming_distance(const NetworkShape& shape, SwitchId a, SwitchId b);

/// All q(n-1) switches adjacent to s, grouped by dimension (dimension 0
/// first), each group in increasing coordinate order.
std::vector<SwitchCoord> neighbors(const SwitchCoord& s, const NetworkShape& shape);

/// Mean switch-to-switch distance over ordered pairs, self-pairs included.
double theoretical_avg_distance(const NetworkShape& shape);

std::int64_t link_count(const NetworkShape& shape);

/// Every shortest switch sequence from a to b, both ends included. One
/// sequence per ordering of the unaligned dimensions; a == b yields [[a]].
std::vector<std::vector<SwitchCoord>> minimal_paths(const SwitchCoord& a, const SwitchCoord& b);

/// Undirected link between two adjacent switches, stored with lo < hi.
struct Link {
  SwitchId lo = 0;
  SwitchId hi = 0;
  int dimension = 0;

  static Link between(const NetworkShape& shape, SwitchId a, SwitchId b);
  auto operator<=>(const Link&) const = default;
};

/// Every link of the network, ordered by (lo, hi).
std::vector<Link> all_links(const NetworkShape& shape);

}  // namespace hxalloc

#endif  // HXALLOC_TOPOLOGY_HPP
