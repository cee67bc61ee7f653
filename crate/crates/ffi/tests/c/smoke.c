#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "shrinkflow.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        SfStatus s_ = (call);                                              \
        if (s_ != SF_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, sf_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    SfMesh *mesh = NULL;
    SfTrajectory *traj = NULL;
    CHECK(sf_mesh_icosphere(2, 1.0, &mesh));
    size_t n = sf_mesh_vertex_count(mesh);
    if (n != 162) return 2;

    double small[3];
    if (sf_mesh_positions(mesh, small, 3) != SF_STATUS_BUFFER_TOO_SMALL) return 3;
    if (sf_mesh_icosphere(2, 1.0, NULL) != SF_STATUS_NULL_POINTER) return 4;

    CHECK(sf_flow_run(mesh, 5e-4, 0.05, &traj));
    double tc = 0.0, lo = 0.0, hi = 0.0;
    CHECK(sf_trajectory_explosion_time(traj, &tc));
    CHECK(sf_trajectory_backward_range(traj, &lo, &hi));
    if (fabs(tc - 0.25) > 0.01) return 5;

    double *h = malloc(n * sizeof(double));
    for (size_t i = 0; i < n; i++) h[i] = i == 0 ? 1.0 : 0.0;
    CHECK(sf_density_evolve(traj, h, n, 0.05, 0.2, 1e-3, 0.5));
    for (size_t i = 0; i < n; i++)
        if (!(h[i] > 0.0)) return 6;
    free(h);

    if (sf_trajectory_explosion_time(traj, NULL) != SF_STATUS_NULL_POINTER) return 7;
    if (sf_density_evolve(traj, small, 3, 0.05, 0.2, 1e-3, 0.5) != SF_STATUS_INVALID_ARGUMENT) return 8;

    printf("shrinkflow %s: Tc = %.4f\n", sf_version(), tc);
    sf_trajectory_free(traj);
    sf_mesh_free(mesh);
    return 0;
}
