#ifndef SHRINKFLOW_H
#define SHRINKFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef struct SfMesh SfMesh;
typedef struct SfTrajectory SfTrajectory;

// Result of every fallible call.
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_BUFFER_TOO_SMALL = 3,
  SF_STATUS_INVALID_MESH = 4,
  SF_STATUS_NOT_CONVEX = 5,
  SF_STATUS_OUT_OF_RANGE = 6,
  SF_STATUS_NUMERICAL_FAILURE = 7,
  SF_STATUS_IO = 8,
  SF_STATUS_PARSE = 9,
  SF_STATUS_PANIC = 10,
  SF_STATUS_OTHER = 11,
} SfStatus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sf_version(void);

// Message of the last error on this thread; valid until the next failing
// call on the same thread. Empty if no error occurred.
const char *sf_last_error(void);

// Subdivided icosahedron projected onto the sphere of the given radius.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum SfStatus sf_mesh_icosphere(uint32_t subdiv, double radius, SfMesh **out);

// Ellipsoid with semi-axes `a`, `b`, `c`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum SfStatus sf_mesh_ellipsoid(double a, double b, double c, uint32_t subdiv, SfMesh **out);

// Mesh from `3 * n_vertices` coordinates and `3 * n_triangles` indices.
//
// # Safety
// `positions` and `triangles` must point to arrays of the stated lengths
// and `out` to writable storage for one handle.
enum SfStatus sf_mesh_new(const double *positions,
                          size_t n_vertices,
                          const uint32_t *triangles,
                          size_t n_triangles,
                          SfMesh **out);

// Loads an OFF or OBJ file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum SfStatus sf_mesh_load(const char *path, SfMesh **out);

// # Safety
// `mesh` must be null or a handle not yet freed.
void sf_mesh_free(SfMesh *mesh);

// Number of vertices, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t sf_mesh_vertex_count(const SfMesh *mesh);

// Number of triangles, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t sf_mesh_triangle_count(const SfMesh *mesh);

// Writes `3 * vertex_count` coordinates.
//
// # Safety
// `mesh` must be a live handle and `out` hold `capacity` doubles.
enum SfStatus sf_mesh_positions(const SfMesh *mesh, double *out, size_t capacity);

// Writes the discrete mean curvature of every vertex.
//
// # Safety
// `mesh` must be a live handle and `out` hold `capacity` doubles.
enum SfStatus sf_mesh_mean_curvature(const SfMesh *mesh, double *out, size_t capacity);

// Writes the smallest edge convexity indicator and whether every edge is
// strictly convex (1) or not (0).
//
// # Safety
// `mesh` must be a live handle; the outputs must be writable.
enum SfStatus sf_mesh_convexity(const SfMesh *mesh,
                                double *min_indicator,
                                int32_t *strictly_convex);

// Runs the flow from `mesh` with initial step `dt0` until the area drops
// below `stop_area_fraction` of its initial value.
//
// # Safety
// `mesh` must be a live handle and `out` writable.
enum SfStatus sf_flow_run(const SfMesh *mesh,
                          double dt0,
                          double stop_area_fraction,
                          SfTrajectory **out);

// Loads a trajectory directory written by `sf_trajectory_save` or the CLI.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` writable.
enum SfStatus sf_trajectory_load(const char *dir, SfTrajectory **out);

// # Safety
// `traj` must be a live handle and `dir` a NUL-terminated string.
enum SfStatus sf_trajectory_save(const SfTrajectory *traj, const char *dir);

// # Safety
// `traj` must be null or a handle not yet freed.
void sf_trajectory_free(SfTrajectory *traj);

// Number of vertices of every slice, or 0 for a null handle.
//
// # Safety
// `traj` must be null or a live handle.
size_t sf_trajectory_vertex_count(const SfTrajectory *traj);

// Estimated extinction time `T_c`.
//
// # Safety
// `traj` must be a live handle and `out` writable.
enum SfStatus sf_trajectory_explosion_time(const SfTrajectory *traj, double *out);

// Range of backward times covered by the snapshots.
//
// # Safety
// `traj` must be a live handle and the outputs writable.
enum SfStatus sf_trajectory_backward_range(const SfTrajectory *traj, double *lo, double *hi);

// Vertex positions of the slice at backward time `u`.
//
// # Safety
// `traj` must be a live handle and `out` hold `capacity` doubles.
enum SfStatus sf_trajectory_slice_positions(const SfTrajectory *traj,
                                            double u,
                                            double *out,
                                            size_t capacity);

// Positions at backward time `u1` of `paths` walkers started at vertex
// `start` at `u0`, generator `c Δ`. Writes `3 * paths` coordinates.
//
// # Safety
// `traj` must be a live handle and `out` hold `capacity` doubles.
enum SfStatus sf_simulate_endpoints(const SfTrajectory *traj,
                                    uint32_t start,
                                    double u0,
                                    double u1,
                                    double dt,
                                    double c,
                                    uint64_t seed,
                                    size_t paths,
                                    double *out,
                                    size_t capacity);

// Evolves vertex densities `h` (one per vertex, normalized on entry to
// unit mass) from backward time `u0` to `u1` in place.
//
// # Safety
// `traj` must be a live handle and `h` hold `len` doubles.
enum SfStatus sf_density_evolve(const SfTrajectory *traj,
                                double *h,
                                size_t len,
                                double u0,
                                double u1,
                                double dt,
                                double c);

// Fraction of `runs` mirror-coupled pairs, started at vertices `a` and `b`
// at backward time `u0`, that have coalesced by `u1`.
//
// # Safety
// `traj` must be a live handle and `out` writable.
enum SfStatus sf_coupling_probability(const SfTrajectory *traj,
                                      uint32_t a,
                                      uint32_t b,
                                      double u0,
                                      double u1,
                                      double dt,
                                      double c,
                                      size_t runs,
                                      uint64_t seed,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHRINKFLOW_H */
