// Naive reference simulator for tiny networks. It follows the same switch
// rules as the library simulator but keeps every buffer slot as a claim with
// a release timestamp (no credit counters, no event queue, no bitmasks), and
// makes its random choices with its own generator. Used to check makespans on
// traffic where the outcome does not depend on those random choices.

#ifndef HXALLOC_TESTS_REFERENCE_SIM_HPP
#define HXALLOC_TESTS_REFERENCE_SIM_HPP

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "hxalloc/topology.hpp"

namespace reference {

using Cycle = std::int64_t;
constexpr Cycle kHeld = std::numeric_limits<Cycle>::max();

struct Config {
  hxalloc::NetworkShape shape;
  bool omni_war = false;
  int m = 0;
  int penalty = 64;
  int size = 16;
  int cap_in = 8;
  int cap_out = 4;
  int vcs = 4;
  int speedup = 2;
  int link_latency = 1;
  int credit_latency = 1;
};

struct Traffic {
  int src, dst;
  Cycle birth;
};

class Sim {
 public:
  Sim(Config c, std::vector<Traffic> traffic, std::uint64_t seed) : c_(c), rng_(seed) {
    n_ = c_.shape.n;
    q_ = c_.shape.q;
    np_ = q_ * (n_ - 1);
    for (const auto& t : traffic) {
      Pkt p;
      p.src = t.src;
      p.dst = t.dst;
      p.dsw = t.dst / c_.shape.concentration;
      p.birth = t.birth;
      pkts_.push_back(p);
      source_[t.src].push_back(static_cast<int>(pkts_.size()) - 1);
    }
  }

  // Returns the cycle of the last delivery (0 with no traffic).
  Cycle run(Cycle limit = 1000000) {
    Cycle last = 0;
    std::size_t delivered = 0;
    for (Cycle t = 0; delivered < pkts_.size(); ++t) {
      if (t > limit) throw std::runtime_error("reference simulation did not finish");
      for (auto& p : pkts_) {
        if (p.deliver == t) {
          ++delivered;
          last = t;
        }
      }
      inject(t);
      links(t);
      for (int s = 0; s < c_.shape.switch_count(); ++s) allocate(s, t);
    }
    return last;
  }

 private:
  struct Pkt {
    int src = 0, dst = 0, dsw = 0;
    Cycle birth = 0, ready = 0, deliver = -1;
    int hops = 0, deroutes = 0;
    bool last_minimal = true;
  };
  using Key = std::tuple<int, int, int>;  // switch, port, vc

  int occupancy(const std::map<Key, std::vector<Cycle>>& claims, const Key& k, Cycle t) const {
    auto it = claims.find(k);
    if (it == claims.end()) return 0;
    return static_cast<int>(std::count_if(it->second.begin(), it->second.end(), [&](Cycle r) { return r > t; }));
  }
  // replace one held claim with a release time
  static void release(std::vector<Cycle>& v, Cycle at) {
    auto it = std::find(v.begin(), v.end(), kHeld);
    if (it == v.end()) throw std::logic_error("no held claim to release");
    *it = at;
  }

  int port_towards(int s, int dim, int value) const {
    const int here = c_.shape.coord(s)[dim];
    return dim * (n_ - 1) + (value < here ? value : value - 1);
  }
  // switch on the far side of network port `port` of switch s
  int far_switch(int s, int port) const {
    const int dim = port / (n_ - 1);
    const int idx = port % (n_ - 1);
    auto c = c_.shape.coord(s);
    const int here = c[dim];
    c[dim] = idx < here ? idx : idx + 1;
    return c_.shape.switch_id(c);
  }

  static bool lane_free(std::vector<Cycle>& lanes, Cycle t) {
    return std::any_of(lanes.begin(), lanes.end(), [&](Cycle e) { return e <= t; });
  }
  static void take_lane(std::vector<Cycle>& lanes, Cycle t, Cycle until) {
    *std::find_if(lanes.begin(), lanes.end(), [&](Cycle e) { return e <= t; }) = until;
  }
  std::vector<Cycle>& lanes(std::map<std::pair<int, int>, std::vector<Cycle>>& m, int s, int port) {
    auto& v = m[{s, port}];
    if (v.empty()) v.assign(static_cast<std::size_t>(c_.speedup), 0);
    return v;
  }

  void inject(Cycle t) {
    for (auto& [e, queue] : source_) {
      if (queue.empty() || busy_[e] > t) continue;
      Pkt& p = pkts_[static_cast<std::size_t>(queue.front())];
      if (p.birth > t) continue;
      const int s = e / c_.shape.concentration;
      const int port = np_ + e % c_.shape.concentration;
      int best = -1, best_free = 0;
      for (int v = 0; v < c_.vcs; ++v) {
        const int free = c_.cap_in - occupancy(in_claims_, {s, port, v}, t);
        if (free > best_free) {
          best = v;
          best_free = free;
        }
      }
      if (best < 0) continue;
      in_claims_[{s, port, best}].push_back(kHeld);
      in_fifo_[{s, port, best}].push_back(queue.front());
      p.ready = t + c_.link_latency;
      queue.pop_front();
      busy_[e] = t + c_.size;
    }
  }

  void links(Cycle t) {
    for (int s = 0; s < c_.shape.switch_count(); ++s) {
      for (int port = 0; port < np_ + c_.shape.concentration; ++port) {
        if (link_busy_[{s, port}] > t) continue;
        int& rr = rr_[{s, port}];
        for (int k = 0; k < c_.vcs; ++k) {
          const int v = (rr + k) % c_.vcs;
          auto& fifo = out_fifo_[{s, port, v}];
          if (fifo.empty()) continue;
          Pkt& p = pkts_[static_cast<std::size_t>(fifo.front())];
          if (p.ready > t) continue;
          const bool network = port < np_;
          int ts = -1, tp = -1;
          if (network) {
            ts = far_switch(s, port);
            tp = port_towards(ts, port / (n_ - 1), c_.shape.coord(s)[port / (n_ - 1)]);
            if (occupancy(in_claims_, {ts, tp, v}, t) >= c_.cap_in) continue;
          }
          const int id = fifo.front();
          fifo.pop_front();
          release(out_claims_[{s, port, v}], t + c_.size);
          link_busy_[{s, port}] = t + c_.size;
          rr = (v + 1) % c_.vcs;
          if (network) {
            in_claims_[{ts, tp, v}].push_back(kHeld);
            in_fifo_[{ts, tp, v}].push_back(id);
            p.ready = t + c_.link_latency;
          } else {
            p.deliver = t + c_.size - 1 + c_.link_latency;
          }
          break;
        }
      }
    }
  }

  struct Req {
    int in_port, vc, out_port, out_vc, id;
    bool minimal;
    int dim, target;
  };

  void allocate(int s, Cycle t) {
    std::vector<Req> reqs;
    const auto here = c_.shape.coord(s);
    for (int port = 0; port < np_ + c_.shape.concentration; ++port) {
      if (!lane_free(lanes(in_lanes_, s, port), t)) continue;
      for (int v = 0; v < c_.vcs; ++v) {
        auto& fifo = in_fifo_[{s, port, v}];
        if (fifo.empty()) continue;
        const int id = fifo.front();
        const Pkt& p = pkts_[static_cast<std::size_t>(id)];
        if (p.ready > t) continue;
        const int ov = std::min(p.hops, c_.vcs - 1);
        if (p.dsw == s) {
          const int out = np_ + p.dst % c_.shape.concentration;
          if (occupancy(out_claims_, {s, out, ov}, t) < c_.cap_out) reqs.push_back({port, v, out, ov, id, true, -1, -1});
          continue;
        }
        const auto dest = c_.shape.coord(p.dsw);
        std::vector<Req> options;
        std::vector<std::int64_t> cost;
        for (int d = 0; d < q_; ++d) {
          if (here[d] == dest[d]) continue;
          for (int val = 0; val < n_; ++val) {
            if (val == here[d]) continue;
            const bool minimal = val == dest[d];
            if (!minimal && (!c_.omni_war || p.deroutes >= c_.m)) continue;
            const int out = port_towards(s, d, val);
            if (occupancy(out_claims_, {s, out, ov}, t) >= c_.cap_out) continue;
            const int ts = far_switch(s, out);
            const int tp = port_towards(ts, d, here[d]);
            std::int64_t occ = 0;
            for (int w = 0; w < c_.vcs; ++w) {
              occ += occupancy(out_claims_, {s, out, w}, t) + occupancy(in_claims_, {ts, tp, w}, t);
            }
            options.push_back({port, v, out, ov, id, minimal, d, val});
            cost.push_back(occ * c_.size + (minimal ? 0 : c_.penalty));
          }
        }
        if (options.empty()) continue;
        const std::int64_t low = *std::min_element(cost.begin(), cost.end());
        std::vector<std::size_t> ties;
        for (std::size_t i = 0; i < cost.size(); ++i) {
          if (cost[i] == low) ties.push_back(i);
        }
        reqs.push_back(options[ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng_)]]);
      }
    }
    std::shuffle(reqs.begin(), reqs.end(), rng_);
    for (const Req& r : reqs) {
      if (occupancy(out_claims_, {s, r.out_port, r.out_vc}, t) >= c_.cap_out) continue;
      auto& il = lanes(in_lanes_, s, r.in_port);
      auto& ol = lanes(out_lanes_, s, r.out_port);
      if (!lane_free(il, t) || !lane_free(ol, t)) continue;
      take_lane(il, t, t + c_.size);
      take_lane(ol, t, t + c_.size);
      in_fifo_[{s, r.in_port, r.vc}].pop_front();
      release(in_claims_[{s, r.in_port, r.vc}], t + c_.size + c_.credit_latency);
      out_claims_[{s, r.out_port, r.out_vc}].push_back(kHeld);
      out_fifo_[{s, r.out_port, r.out_vc}].push_back(r.id);
      Pkt& p = pkts_[static_cast<std::size_t>(r.id)];
      p.ready = t + 1;
      if (r.dim >= 0) {
        ++p.hops;
        if (!r.minimal) ++p.deroutes;
      }
    }
  }

  Config c_;
  std::mt19937_64 rng_;
  int n_ = 0, q_ = 0, np_ = 0;
  std::vector<Pkt> pkts_;
  std::map<int, std::deque<int>> source_;
  std::map<int, Cycle> busy_;
  std::map<Key, std::vector<Cycle>> in_claims_, out_claims_;
  std::map<Key, std::deque<int>> in_fifo_, out_fifo_;
  std::map<std::pair<int, int>, std::vector<Cycle>> in_lanes_, out_lanes_;
  std::map<std::pair<int, int>, Cycle> link_busy_;
  std::map<std::pair<int, int>, int> rr_;
};

}  // namespace reference

#endif  // HXALLOC_TESTS_REFERENCE_SIM_HPP
