#include "gdp/graph_topology.hpp"

#include <string>

namespace gdp::graph {

Topology parse_topology(std::string_view name) {
  if (name == "complete") return Topology::Complete;
  if (name == "grid") return Topology::Grid;
  if (name == "self_cross") return Topology::SelfCross;
  if (name == "chain") return Topology::Chain;
  throw std::invalid_argument("unknown graph topology: " + std::string(name));
}

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::Complete: return "complete";
    case Topology::Grid: return "grid";
    case Topology::SelfCross: return "self_cross";
    case Topology::Chain: return "chain";
  }
  return "unknown";
}

std::size_t DiffusionGraph::directed_edge_count() const {
  std::size_t n = 0;
  for (const auto& nb : neighborhoods) n += nb.size();
  return n;
}

DiffusionGraph build_complete_graph(int num_nodes) {
  if (num_nodes < 1) throw EmptyGraph("complete graph needs at least one node");
  DiffusionGraph g;
  g.num_nodes = num_nodes;
  g.topology = Topology::Complete;
  std::vector<int> all(num_nodes);
  for (int i = 0; i < num_nodes; ++i) all[i] = i;
  g.neighborhoods.assign(num_nodes, all);
  return g;
}

DiffusionGraph build_grid_graph(int num_images, int height, int width) {
  if (num_images < 1 || height < 1 || width < 1) throw EmptyGraph("grid graph needs positive dimensions");
  DiffusionGraph g;
  g.topology = Topology::Grid;
  g.num_nodes = num_images * height * width;
  g.neighborhoods.resize(g.num_nodes);
  const int cells = height * width;
  for (int i = 0; i < num_images; ++i)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        auto& nb = g.neighborhoods[i * cells + y * width + x];
        if (y > 0) nb.push_back(i * cells + (y - 1) * width + x);
        if (x > 0) nb.push_back(i * cells + y * width + x - 1);
        if (x + 1 < width) nb.push_back(i * cells + y * width + x + 1);
        if (y + 1 < height) nb.push_back(i * cells + (y + 1) * width + x);
        if (i > 0) nb.push_back((i - 1) * cells + y * width + x);
        if (i + 1 < num_images) nb.push_back((i + 1) * cells + y * width + x);
        if (nb.empty()) nb.push_back(i * cells + y * width + x);
      }
  return g;
}

DiffusionGraph build_self_cross_schedule(int num_images, int cells_per_image) {
  if (num_images < 1 || cells_per_image < 1) throw EmptyGraph("self-cross graph needs positive dimensions");
  DiffusionGraph g;
  g.topology = Topology::SelfCross;
  g.num_nodes = num_images * cells_per_image;
  Neighborhoods within(g.num_nodes), across(g.num_nodes);
  for (int i = 0; i < num_images; ++i)
    for (int j = 0; j < cells_per_image; ++j) {
      const int node = i * cells_per_image + j;
      for (int k = 0; k < cells_per_image; ++k) within[node].push_back(i * cells_per_image + k);
      for (int m = 0; m < num_images; ++m) across[node].push_back(m * cells_per_image + j);
    }
  g.neighborhoods.resize(g.num_nodes);
  for (int n = 0; n < g.num_nodes; ++n) {
    auto& u = g.neighborhoods[n];
    u = within[n];
    for (int j : across[n])
      if (j != n) u.push_back(j);
  }
  g.phase_schedule = {std::move(within), std::move(across)};
  return g;
}

DiffusionGraph build_pose_chain_graph(int num_frames) {
  if (num_frames < 1) throw EmptyGraph("chain graph needs at least one frame");
  DiffusionGraph g;
  g.topology = Topology::Chain;
  g.num_nodes = num_frames;
  g.neighborhoods.resize(num_frames);
  for (int i = 0; i < num_frames; ++i) {
    if (i > 0) g.neighborhoods[i].push_back(i - 1);
    if (i + 1 < num_frames) g.neighborhoods[i].push_back(i + 1);
  }
  return g;
}

std::vector<std::pair<int, int>> chain_edges(const DiffusionGraph& chain) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < chain.num_nodes; ++i)
    for (int j : chain.neighborhoods[i])
      if (j > i) edges.emplace_back(i, j);
  return edges;
}

DiffusionGraph build_graph(Topology t, int num_images, int height, int width) {
  switch (t) {
    case Topology::Complete: return build_complete_graph(num_images * height * width);
    case Topology::Grid: return build_grid_graph(num_images, height, width);
    case Topology::SelfCross: return build_self_cross_schedule(num_images, height * width);
    case Topology::Chain: return build_pose_chain_graph(num_images * height * width);
  }
  throw std::invalid_argument("unknown topology");
}

namespace {
Neighborhoods replicate(const Neighborhoods& nb, int nodes, int copies) {
  Neighborhoods out;
  out.reserve(static_cast<std::size_t>(nodes) * copies);
  for (int c = 0; c < copies; ++c)
    for (const auto& list : nb) {
      auto& dst = out.emplace_back();
      dst.reserve(list.size());
      for (int j : list) dst.push_back(j + c * nodes);
    }
  return out;
}
}  // namespace

DiffusionGraph disjoint_union(const DiffusionGraph& g, int copies) {
  if (copies < 1) throw EmptyGraph("disjoint union needs at least one copy");
  DiffusionGraph out;
  out.topology = g.topology;
  out.num_nodes = g.num_nodes * copies;
  out.neighborhoods = replicate(g.neighborhoods, g.num_nodes, copies);
  for (const auto& phase : g.phase_schedule) out.phase_schedule.push_back(replicate(phase, g.num_nodes, copies));
  return out;
}

}  // namespace gdp::graph
