#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "cagenet/mesh.hpp"
#include "cagenet/spatial.hpp"

namespace cagenet {

class CageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Level-set extraction. Nodes with value < level are inside; normals point
/// toward increasing values. Ambiguous faces are resolved with the asymptotic
/// decider so neighbouring cells agree; polygons of four or more edge
/// vertices are triangulated without creating edges shared across cells.
/// Throws CageError when the level set is empty or touches the grid boundary.
TriangleMesh marching_cubes(const ScalarGrid& grid, double level);

/// Repeatedly deletes every component whose first vertex has winding number
/// >= 0.5 w.r.t. the union of the remaining components, until none changes.
TriangleMesh remove_internal_components(const TriangleMesh& mesh);

/// Largest, over component pairs, of the smallest vertex-to-surface distance
/// between the two components. Throws CageError for a single component.
double component_gap(const TriangleMesh& mesh);
/// Same measure over an explicit list of parts (each needs faces).
double partition_gap(const std::vector<TriangleMesh>& parts);

/// Splits the input faces by nearest shell component; one group per
/// component of `shells`, in component order.
std::vector<TriangleMesh> group_faces_by_shell(const TriangleMesh& input, const TriangleMesh& shells);

struct SimplifyResult {
  TriangleMesh mesh;
  bool reached_target = true;  // false: link condition blocked further collapses
};

/// Garland-Heckbert edge collapse on a closed manifold mesh down to at most
/// `target_faces`. Collapses violating the link condition or flipping a face
/// normal are skipped.
SimplifyResult simplify_qem(const TriangleMesh& mesh, int target_faces);

struct CageParams {
  double offset = 0.02;
  int target_faces = 2000;
  int max_faces = 4000;
  int grid_dims = 96;  // nodes along the longest axis
  bool require_enclosure = false;

  void validate() const;
};

struct GrowthStep {
  double offset = 0.0;
  int components_before_removal = 0;
  int components_after_removal = 0;
  double gap = 0.0;  // 0 on the final step
};

struct Cage {
  TriangleMesh mesh;
  double effective_offset = 0.0;
  CageParams params;
  double grid_spacing = 0.0;
  std::vector<GrowthStep> growth;
  int face_budget_used = 0;
  bool simplification_reached_target = true;
  double min_enclosure_winding = 0.0;  // over input vertices
};

/// UDF -> marching cubes -> interior removal -> offset growth -> QEM.
/// Throws CageError if enclosure is required but unreachable at max_faces.
Cage generate_cage(const TriangleMesh& mesh, const CageParams& params);

std::vector<Cage> generate_offset_family(const TriangleMesh& mesh, const std::vector<double>& offsets,
                                         const CageParams& params);

/// Checks closed, edge/vertex manifold and single component. Returns an empty
/// string when valid, else a description.
std::string cage_violation(const TriangleMesh& cage);

}  // namespace cagenet
