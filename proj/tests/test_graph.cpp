#include <array>
#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "gdp/graph_topology.hpp"

using namespace gdp::graph;

namespace {

void check_in_range(const DiffusionGraph& g) {
  for (const auto& nb : g.neighborhoods)
    for (int j : nb) {
      CHECK(j >= 0);
      CHECK(j < g.num_nodes);
    }
  for (const auto& phase : g.phase_schedule)
    for (const auto& nb : phase)
      for (int j : nb) CHECK((j >= 0 && j < g.num_nodes));
}

// Brute force: cells are adjacent iff their (image, y, x) coordinates differ
// by exactly one step along exactly one axis.
std::map<int, int> brute_force_degree_histogram(int n, int h, int w) {
  std::map<int, int> hist;
  for (int a = 0; a < n * h * w; ++a) {
    int deg = 0;
    for (int b = 0; b < n * h * w; ++b) {
      const int di = std::abs(a / (h * w) - b / (h * w));
      const int dy = std::abs((a % (h * w)) / w - (b % (h * w)) / w);
      const int dx = std::abs(a % w - b % w);
      if (di + dy + dx == 1) ++deg;
    }
    ++hist[deg == 0 ? 1 : deg];  // isolated nodes carry a self-loop
  }
  return hist;
}

}  // namespace

TEST_CASE("complete graph") {
  const auto g1 = build_complete_graph(1);
  CHECK(g1.neighborhoods == Neighborhoods{{0}});
  for (int n : {2, 5, 9}) {
    const auto g = build_complete_graph(n);
    CHECK(g.neighborhoods.size() == static_cast<std::size_t>(n));
    CHECK(g.directed_edge_count() == static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i)
      for (int j : g.neighborhoods[i]) {
        const auto& back = g.neighborhoods[j];
        CHECK(std::find(back.begin(), back.end(), i) != back.end());
      }
  }
  CHECK_THROWS_AS(build_complete_graph(0), EmptyGraph);
}

TEST_CASE("complete graph edge set is invariant under relabeling") {
  std::mt19937_64 rng(3);
  const int n = 7;
  const auto g = build_complete_graph(n);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::set<std::pair<int, int>> edges, relabeled;
  for (int i = 0; i < n; ++i)
    for (int j : g.neighborhoods[i]) {
      edges.emplace(i, j);
      relabeled.emplace(perm[i], perm[j]);
    }
  CHECK(edges == relabeled);
}

TEST_CASE("grid graph neighborhoods") {
  const auto g = build_grid_graph(3, 3, 3);
  // interior cell of the middle image
  CHECK(g.neighborhoods[1 * 9 + 1 * 3 + 1].size() == 6);
  // corner of the first image: right, down, and the next image
  const auto& corner = g.neighborhoods[0];
  CHECK(std::set<int>(corner.begin(), corner.end()) == std::set<int>{1, 3, 9});

  const auto chain = build_grid_graph(5, 1, 1);
  CHECK(chain.neighborhoods[2] == std::vector<int>{1, 3});
  CHECK(chain.neighborhoods[0] == std::vector<int>{1});
  CHECK(build_grid_graph(1, 1, 1).neighborhoods == Neighborhoods{{0}});
}

TEST_CASE("grid degree histogram matches brute-force enumeration") {
  const std::array<std::array<int, 3>, 6> sizes{{{1, 1, 1}, {3, 3, 3}, {2, 4, 5}, {4, 1, 1}, {1, 2, 3}, {5, 2, 2}}};
  for (auto [n, h, w] : sizes) {
    const auto g = build_grid_graph(n, h, w);
    std::map<int, int> hist;
    for (const auto& nb : g.neighborhoods) ++hist[static_cast<int>(nb.size())];
    CHECK(hist == brute_force_degree_histogram(n, h, w));
  }
}

TEST_CASE("self-cross schedule") {
  const auto one = build_self_cross_schedule(1, 3);
  REQUIRE(one.phase_schedule.size() == 2);
  for (int i = 0; i < 3; ++i) CHECK(one.phase_schedule[1][i] == std::vector<int>{i});

  const auto g = build_self_cross_schedule(2, 2);
  std::size_t p1 = 0, p2 = 0;
  for (const auto& nb : g.phase_schedule[0]) p1 += nb.size();
  for (const auto& nb : g.phase_schedule[1]) p2 += nb.size();
  CHECK(p1 == 8);
  CHECK(p2 == 8);

  // union of phases is a subset of the complete graph's edges
  const auto big = build_self_cross_schedule(3, 4);
  const auto complete = build_complete_graph(12);
  for (int i = 0; i < 12; ++i)
    for (const auto& phase : big.phase_schedule)
      for (int j : phase[i]) {
        const auto& all = complete.neighborhoods[i];
        CHECK(std::find(all.begin(), all.end(), j) != all.end());
      }
}

TEST_CASE("pose chain graph") {
  CHECK(chain_edges(build_pose_chain_graph(3)) == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  CHECK(chain_edges(build_pose_chain_graph(1)).empty());
  for (int n = 1; n < 12; ++n) CHECK(chain_edges(build_pose_chain_graph(n)).size() == static_cast<std::size_t>(n - 1));
  const auto c = build_pose_chain_graph(6);
  for (int i = 0; i < 6; ++i)
    for (int j : c.neighborhoods[i]) CHECK(std::abs(i - j) == 1);
}

TEST_CASE("no builder produces out-of-range neighbors") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = d(rng), h = d(rng), w = d(rng);
    check_in_range(build_complete_graph(n * h));
    check_in_range(build_grid_graph(n, h, w));
    check_in_range(build_self_cross_schedule(n, h * w));
    check_in_range(build_pose_chain_graph(n));
    check_in_range(disjoint_union(build_self_cross_schedule(n, h), d(rng)));
  }
}

TEST_CASE("disjoint union keeps copies separate") {
  const auto u = disjoint_union(build_complete_graph(3), 2);
  CHECK(u.num_nodes == 6);
  CHECK(u.neighborhoods[4] == std::vector<int>{3, 4, 5});
}
