#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fwionet/common.hpp"

namespace fwionet {

// Explicit 2nd-order finite-difference solver for the constant-density 2-D
// acoustic wave equation. Fields are row-major with z as the slow axis:
// idx = iz*nx + ix. The surface (z = 0) carries sources and receivers.

struct SimGrid {
    int nx = 70, nz = 70;           // model cell counts (excludes sponge padding)
    double dx = 10.0, dz = 10.0;    // m
    int nt_sim = 1000;
    double dt_sim = 1e-3;           // s
    int record_stride = 1;          // recorded T = nt_sim / record_stride
    int sponge_width = 20;          // cells of absorbing padding on every side
    double sponge_strength = 0.015; // per-cell damping coefficient
};

struct VelocityModel {
    int nx = 70, nz = 70;
    std::vector<float> cells;  // [iz*nx + ix], m/s
    float v_min = 1500.f, v_max = 4500.f;

    float at(int ix, int iz) const { return cells[static_cast<std::size_t>(iz) * nx + ix]; }
    float& at(int ix, int iz) { return cells[static_cast<std::size_t>(iz) * nx + ix]; }
    float max_cell() const;
};

struct Source {
    double frequency_hz = 15.0;
    double x_m = 0.0;  // horizontal surface position; depth is 0
};
using SourceSet = std::vector<Source>;

struct ShotGather {
    int n_sources = 0, nt = 0, n_receivers = 0;
    double dt_record = 1e-3;
    std::vector<float> data;  // [s][t][r]

    float at(int s, int t, int r) const {
        return data[(static_cast<std::size_t>(s) * nt + t) * n_receivers + r];
    }
};

struct CflResult {
    bool stable = false;
    double max_dt = 0.0;
};

// max_dt = CFL * min(dx,dz) / (v_max * sqrt(2)) with CFL = 0.9
CflResult cfl_check(double v_max, double dx, double dz, double dt);

// w(t) = (1 - 2 pi^2 f^2 (t-t0)^2) exp(-pi^2 f^2 (t-t0)^2), peak 1 at t = t0
std::vector<float> ricker_wavelet(double f, double dt, int nt, double t0);
bool ricker_truncated(double f, double dt, int nt, double t0);

// Padded simulation domain; the sponge ring lives in the padding.
struct SimDomain {
    int nx = 0, nz = 0;  // padded extents
    int pad = 0;
    double dx = 0, dz = 0, dt = 0;
    std::vector<float> c2dt2;  // (c*dt)^2 per padded cell
    std::vector<float> damp;   // per-step damping mask

    int index(int ix, int iz) const { return iz * nx + ix; }
    int surface_index(int model_ix) const { return pad * nx + pad + model_ix; }
};

SimDomain make_domain(const VelocityModel& v, const SimGrid& g);
SimDomain make_bare_domain(int nx, int nz, double dx, double dz, double dt, float c);

// Single update of the leapfrog scheme:
//   p_next = damp .* (2 p_cur - p_prev + (c dt)^2 (Lap p_cur - src))
// Outermost ring is held at zero (Dirichlet); damping of p_cur for the next
// step's p_prev is the caller's (or advance()'s) responsibility.
std::vector<float> step_wavefield(const SimDomain& d, const std::vector<float>& p_prev,
                                  const std::vector<float>& p_cur, float source_value, int source_cell);

// Advances (p_prev, p_cur) by one step in place; scratch must be a same-size
// buffer and holds garbage afterwards. Applies the two-field sponge damping.
void advance(const SimDomain& d, std::vector<float>& p_prev, std::vector<float>& p_cur,
             std::vector<float>& scratch, float source_value, int source_cell);

// One source at (xs, z=0): time-loop over nt_sim steps, recording the surface
// row every record_stride steps. Returns T x R samples, row-major [t][r].
std::vector<float> simulate_shot(const VelocityModel& v, double f, double xs, const SimGrid& g);

// Stacks the independent shots of a SourceSet into a gather.
ShotGather forward_model(const VelocityModel& v, const SourceSet& sources, const SimGrid& g);

// Largest dt_sim satisfying the CFL bound that divides dt_record exactly.
SimGrid make_sim_grid(double v_max, int t_record, double dt_record, int nx = 70, int nz = 70, double dx = 10.0,
                      double dz = 10.0, int sponge_width = 20, double sponge_strength = 0.015);

}  // namespace fwionet
