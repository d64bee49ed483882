#include "hxalloc/allocation.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace hxalloc {

namespace {

void check_args(int p, int r_y, int r_x, int n) {
  if (n < 1) throw AllocationError("side n must be positive");
  if (p < 0 || p >= n || r_y < 0 || r_y >= n || r_x < 0 || r_x >= n) {
    throw AllocationError("allocation argument outside [0, n)");
  }
}

void require_even(int n, std::string_view what) {
  if (n % 2 != 0) throw AllocationError(std::string(what) + " is only defined for even n");
}

int mod(int a, int n) { return ((a % n) + n) % n; }

std::vector<int> shuffled_range(int size, std::uint64_t seed, std::uint32_t stream) {
  std::vector<int> v(static_cast<std::size_t>(size));
  std::iota(v.begin(), v.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::mt19937_64 rng(seq);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

}  // namespace

std::string_view to_string(AllocationKind kind) {
  switch (kind) {
    case AllocationKind::Row: return "row";
    case AllocationKind::Diagonal: return "diagonal";
    case AllocationKind::FullSpread: return "full_spread";
    case AllocationKind::Rectangular: return "rectangular";
    case AllocationKind::LShape: return "l_shape";
    case AllocationKind::RandomEndpoint: return "random_endpoint";
    case AllocationKind::RandomSwitch: return "random_switch";
  }
  return "?";
}

AllocationKind parse_allocation_kind(std::string_view name) {
  for (AllocationKind k : kAllAllocationKinds) {
    if (to_string(k) == name) return k;
  }
  if (name == "fullspread" || name == "full-spread") return AllocationKind::FullSpread;
  if (name == "rect") return AllocationKind::Rectangular;
  if (name == "lshape" || name == "l-shape") return AllocationKind::LShape;
  throw AllocationError("unknown allocation kind '" + std::string(name) + "'");
}

bool is_random(AllocationKind kind) {
  return kind == AllocationKind::RandomEndpoint || kind == AllocationKind::RandomSwitch;
}

PermutationPair PermutationPair::generate(int n, std::uint64_t seed) {
  if (n < 1) throw AllocationError("side n must be positive");
  PermutationPair pp;
  pp.n_ = n;
  pp.seed_ = seed;
  pp.endpoint_perm_ = shuffled_range(n * n * n, seed, 0);
  pp.switch_perm_ = shuffled_range(n * n, seed, 1);
  return pp;
}

PermutationPair PermutationPair::identity(int n) {
  PermutationPair pp;
  pp.n_ = n;
  pp.endpoint_perm_.resize(static_cast<std::size_t>(n * n * n));
  pp.switch_perm_.resize(static_cast<std::size_t>(n * n));
  std::iota(pp.endpoint_perm_.begin(), pp.endpoint_perm_.end(), 0);
  std::iota(pp.switch_perm_.begin(), pp.switch_perm_.end(), 0);
  return pp;
}

Slot PermutationPair::endpoint_image(int a, int b, int c) const {
  int v = endpoint_perm_[static_cast<std::size_t>((a * n_ + b) * n_ + c)];
  return {v / (n_ * n_), (v / n_) % n_, v % n_};
}

std::pair<int, int> PermutationPair::switch_image(int a, int b) const {
  int v = switch_perm_[static_cast<std::size_t>(a * n_ + b)];
  return {v / n_, v % n_};
}

bool PermutationPair::is_bijection() const {
  auto check = [](const std::vector<int>& perm) {
    std::set<int> image(perm.begin(), perm.end());
    return image.size() == perm.size() && !perm.empty() && *image.begin() == 0 &&
           *image.rbegin() == static_cast<int>(perm.size()) - 1;
  };
  return check(endpoint_perm_) && check(switch_perm_);
}

Slot alloc_row(int p, int r_y, int r_x, int n) {
  check_args(p, r_y, r_x, n);
  return {p, r_y, r_x};
}

Slot alloc_diagonal(int p, int r_y, int r_x, int n) {
  check_args(p, r_y, r_x, n);
  return {r_y, (r_y + p) % n, r_x};
}

Slot alloc_full_spread(int p, int r_y, int r_x, int n) {
  check_args(p, r_y, r_x, n);
  return {r_y, r_x, p};
}

// Blocks of (n/2) rows by 2 columns. Even partitions fill the top half,
// odd ones the bottom half; p/2 selects the column pair.
Slot alloc_rectangular(int p, int r_y, int r_x, int n) {
  require_even(n, "rectangular tessellation");
  check_args(p, r_y, r_x, n);
  return {r_y / 2 + (n / 2) * (p % 2), r_y % 2 + 2 * (p / 2), r_x};
}

Slot alloc_l_shape(int p, int r_y, int r_x, int n) {
  require_even(n, "L-shape tessellation");
  check_args(p, r_y, r_x, n);
  if (r_y < n / 2) return {mod(p + r_y, n), p, r_x};
  return {p, mod(p + r_y - n / 2 + 1, n), r_x};
}

Slot alloc_random_endpoint(int p, int r_y, int r_x, const PermutationPair& perms) {
  check_args(p, r_y, r_x, perms.side());
  return perms.endpoint_image(p, r_y, r_x);
}

Slot alloc_random_switch(int p, int r_y, int r_x, const PermutationPair& perms) {
  check_args(p, r_y, r_x, perms.side());
  auto [s_y, s_x] = perms.switch_image(p, r_y);
  return {s_y, s_x, r_x};
}

Slot allocate(AllocationKind kind, int p, int r_y, int r_x, int n, const PermutationPair* perms) {
  switch (kind) {
    case AllocationKind::Row: return alloc_row(p, r_y, r_x, n);
    case AllocationKind::Diagonal: return alloc_diagonal(p, r_y, r_x, n);
    case AllocationKind::FullSpread: return alloc_full_spread(p, r_y, r_x, n);
    case AllocationKind::Rectangular: return alloc_rectangular(p, r_y, r_x, n);
    case AllocationKind::LShape: return alloc_l_shape(p, r_y, r_x, n);
    case AllocationKind::RandomEndpoint:
    case AllocationKind::RandomSwitch:
      if (perms == nullptr) throw AllocationError("random allocation needs a permutation pair");
      if (perms->side() != n) throw AllocationError("permutation pair side does not match n");
      return kind == AllocationKind::RandomEndpoint ? alloc_random_endpoint(p, r_y, r_x, *perms)
                                                    : alloc_random_switch(p, r_y, r_x, *perms);
  }
  throw AllocationError("unknown allocation kind");
}

std::vector<SwitchId> Partition::switches() const {
  std::set<SwitchId> s;
  for (EndpointId e : placement) s.insert(endpoint_switch(shape, e));
  return {s.begin(), s.end()};
}

Partition build_partition(AllocationKind kind, int p, const NetworkShape& shape, int size,
                          std::optional<std::uint64_t> seed) {
  shape.validate();
  const int n = shape.n;
  if (shape.q != 2 || shape.concentration != n) {
    throw AllocationError("allocation functions need a 2D HyperX with concentration n");
  }
  const int block = n * n;
  if (size <= 0 || size % block != 0) {
    throw AllocationError("partition size " + std::to_string(size) + " is not a positive multiple of n^2");
  }
  const int blocks = size / block;
  if (p < 0 || p + blocks > n) throw AllocationError("partition block index overflow");

  std::optional<PermutationPair> perms;
  if (is_random(kind)) {
    if (!seed) throw AllocationError("random allocation kinds require a seed");
    perms = PermutationPair::generate(n, *seed);
  }

  Partition part;
  part.id = p;
  part.kind = kind;
  if (is_random(kind)) part.seed = seed;
  part.shape = shape;
  part.placement.reserve(static_cast<std::size_t>(size));
  for (int r = 0; r < size; ++r) {
    LogicalRank lr = LogicalRank::from_rank(r % block, n);
    Slot s = allocate(kind, p + r / block, lr.r_y, lr.r_x, n, perms ? &*perms : nullptr);
    part.placement.push_back(endpoint_id(shape, {SwitchCoord::yx(s.s_y, s.s_x), s.c}));
  }
  return part;
}

nlohmann::json to_json(const Partition& partition) {
  nlohmann::json table = nlohmann::json::array();
  for (int r = 0; r < partition.size(); ++r) {
    EndpointAddr a = endpoint_addr(partition.shape, partition.endpoint_of(r));
    table.push_back({{"rank", r}, {"s_y", a.sw.y()}, {"s_x", a.sw.x()}, {"c", a.offset}});
  }
  nlohmann::json j = {{"kind", to_string(partition.kind)},
                      {"p", partition.id},
                      {"n", partition.shape.n},
                      {"size", partition.size()},
                      {"placement", table}};
  j["seed"] = partition.seed ? nlohmann::json(*partition.seed) : nlohmann::json(nullptr);
  return j;
}

Partition partition_from_json(const nlohmann::json& j) {
  Partition part;
  part.kind = parse_allocation_kind(j.at("kind").get<std::string>());
  part.id = j.at("p").get<int>();
  part.shape = NetworkShape::hyperx2d(j.at("n").get<int>());
  if (!j.at("seed").is_null()) part.seed = j.at("seed").get<std::uint64_t>();
  const auto& table = j.at("placement");
  part.placement.resize(table.size());
  std::set<EndpointId> seen;
  std::set<int> ranks;
  for (const auto& row : table) {
    int r = row.at("rank").get<int>();
    if (r < 0 || r >= static_cast<int>(table.size()) || !ranks.insert(r).second) {
      throw AllocationError("bad rank " + std::to_string(r) + " in placement table");
    }
    EndpointId e = endpoint_id(part.shape, {SwitchCoord::yx(row.at("s_y"), row.at("s_x")), row.at("c").get<int>()});
    if (!seen.insert(e).second) throw AllocationError("placement table is not injective");
    part.placement[static_cast<std::size_t>(r)] = e;
  }
  return part;
}

}  // namespace hxalloc
