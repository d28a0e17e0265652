#pragma once

#include "cagenet/mesh.hpp"

namespace cagenet::shapes {

/// Subdivided icosahedron projected to the sphere; level 3 has 642
/// vertices, level 4 has 2562.
TriangleMesh icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Closed axis-aligned box, each face split into n x n quads (two triangles each).
TriangleMesh box(const Vec3& lo, const Vec3& hi, int n = 1);

TriangleMesh regular_tetrahedron(double circumradius = 1.0, const Vec3& center = Vec3::Zero());

/// Closed capped cylinder along the x axis from x0 to x1. `rings` counts the
/// interior cross-sections; cap centers are vertices. The vertex layout is
/// mirror symmetric about x = (x0 + x1) / 2 when x0 = -x1.
TriangleMesh capped_cylinder(double x0, double x1, double radius, int segments, int rings);

/// Closed torus about the z axis.
TriangleMesh torus(double major, double minor, int major_segments, int minor_segments, const Vec3& center = Vec3::Zero());

/// Applies p -> diag(scale) * p + translate.
TriangleMesh transformed(TriangleMesh mesh, const Vec3& scale, const Vec3& translate);

/// Reverses the winding of every face.
TriangleMesh flipped(TriangleMesh mesh);

}  // namespace cagenet::shapes
