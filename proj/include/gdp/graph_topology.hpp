#pragma once

// Neighborhood structures for diffusion and multi-level decoding.
//
// Node order is image-major: node (image i, cell j) has index i*cells + j.

#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace gdp::graph {

enum class Topology { Complete, Grid, SelfCross, Chain };

Topology parse_topology(std::string_view name);
std::string_view to_string(Topology t);

class EmptyGraph : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Neighborhoods = std::vector<std::vector<int>>;

struct DiffusionGraph {
  int num_nodes = 0;
  Topology topology = Topology::Complete;
  // Ordered neighbor list per node. For self-cross graphs this is the union
  // of the phases.
  Neighborhoods neighborhoods;
  // Self-cross only: the phases run one after another.
  std::vector<Neighborhoods> phase_schedule;

  std::size_t directed_edge_count() const;
};

// Every node attends to every node, itself included.
DiffusionGraph build_complete_graph(int num_nodes);

// Images stacked as a cube: 4-connected cells within an image plus the same
// cell in the previous and next image (no wrap at the stack ends). With
// height = width = 1 this is a chain over images. A node with no neighbor at
// all (a single cell in a single image) gets a self-loop.
DiffusionGraph build_grid_graph(int num_images, int height, int width);

// Two phases: a complete graph within each image, then a complete graph over
// images for every cell index.
DiffusionGraph build_self_cross_schedule(int num_images, int cells_per_image);

// Frame i is linked to i-1 and i+1. Used to enumerate relative-pose pairs.
DiffusionGraph build_pose_chain_graph(int num_frames);

// Undirected (i, i+1) pairs of a chain graph.
std::vector<std::pair<int, int>> chain_edges(const DiffusionGraph& chain);

// Builds the topology for num_images windows of `cells` nodes each.
DiffusionGraph build_graph(Topology t, int num_images, int height, int width);

// `copies` disjoint replicas, used to run a batch of windows as one graph.
DiffusionGraph disjoint_union(const DiffusionGraph& g, int copies);

}  // namespace gdp::graph
