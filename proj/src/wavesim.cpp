#include "fwionet/wavesim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fwionet {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kCflNumber = 0.9;
}  // namespace

float VelocityModel::max_cell() const {
    float m = 0.f;
    for (float c : cells) m = std::max(m, c);
    return m;
}

CflResult cfl_check(double v_max, double dx, double dz, double dt) {
    CflResult r;
    r.max_dt = kCflNumber * std::min(dx, dz) / (v_max * std::sqrt(2.0));
    r.stable = dt <= r.max_dt;
    return r;
}

std::vector<float> ricker_wavelet(double f, double dt, int nt, double t0) {
    if (f <= 0.0) throw std::invalid_argument("ricker_wavelet: frequency must be positive");
    if (t0 < 1.0 / f) throw std::invalid_argument("ricker_wavelet: delay t0 must be at least 1/f");
    if (ricker_truncated(f, dt, nt, t0))
        std::fprintf(stderr, "warning: ricker source truncated (record %.4fs shorter than delay %.4fs)\n",
                     nt * dt, t0);
    std::vector<float> w(static_cast<std::size_t>(nt));
    for (int i = 0; i < nt; ++i) {
        const double u = kPi * kPi * f * f * (i * dt - t0) * (i * dt - t0);
        w[static_cast<std::size_t>(i)] = static_cast<float>((1.0 - 2.0 * u) * std::exp(-u));
    }
    return w;
}

bool ricker_truncated(double f, double dt, int nt, double t0) { return nt * dt < t0; }

SimDomain make_domain(const VelocityModel& v, const SimGrid& g) {
    if (v.nx != g.nx || v.nz != g.nz)
        throw std::invalid_argument("make_domain: velocity extents do not match grid");
    SimDomain d;
    d.pad = g.sponge_width;
    d.nx = g.nx + 2 * d.pad;
    d.nz = g.nz + 2 * d.pad;
    d.dx = g.dx;
    d.dz = g.dz;
    d.dt = g.dt_sim;
    d.c2dt2.resize(static_cast<std::size_t>(d.nx) * d.nz);
    d.damp.resize(d.c2dt2.size());
    for (int iz = 0; iz < d.nz; ++iz) {
        for (int ix = 0; ix < d.nx; ++ix) {
            // velocity extended into the padding by edge replication
            const int mx = std::clamp(ix - d.pad, 0, g.nx - 1);
            const int mz = std::clamp(iz - d.pad, 0, g.nz - 1);
            const double c = v.at(mx, mz);
            d.c2dt2[static_cast<std::size_t>(d.index(ix, iz))] = static_cast<float>(c * c * d.dt * d.dt);
            const int depth = std::max({0, d.pad - ix, ix - (d.pad + g.nx - 1), d.pad - iz, iz - (d.pad + g.nz - 1)});
            const double a = g.sponge_strength * depth;
            d.damp[static_cast<std::size_t>(d.index(ix, iz))] = static_cast<float>(std::exp(-a * a));
        }
    }
    return d;
}

SimDomain make_bare_domain(int nx, int nz, double dx, double dz, double dt, float c) {
    SimDomain d;
    d.pad = 0;
    d.nx = nx;
    d.nz = nz;
    d.dx = dx;
    d.dz = dz;
    d.dt = dt;
    d.c2dt2.assign(static_cast<std::size_t>(nx) * nz, static_cast<float>(double(c) * c * dt * dt));
    d.damp.assign(d.c2dt2.size(), 1.f);
    return d;
}

static void compute_next(const SimDomain& d, const std::vector<float>& p_prev, const std::vector<float>& p_cur,
                         std::vector<float>& p_next, float source_value, int source_cell) {
    const float inv_dx2 = static_cast<float>(1.0 / (d.dx * d.dx));
    const float inv_dz2 = static_cast<float>(1.0 / (d.dz * d.dz));
    const int nx = d.nx, nz = d.nz;
    std::fill(p_next.begin(), p_next.end(), 0.f);
    for (int iz = 1; iz < nz - 1; ++iz) {
        const std::size_t row = static_cast<std::size_t>(iz) * nx;
        for (int ix = 1; ix < nx - 1; ++ix) {
            const std::size_t i = row + ix;
            const float lap = (p_cur[i - 1] - 2.f * p_cur[i] + p_cur[i + 1]) * inv_dx2 +
                              (p_cur[i - nx] - 2.f * p_cur[i] + p_cur[i + nx]) * inv_dz2;
            p_next[i] = 2.f * p_cur[i] - p_prev[i] + d.c2dt2[i] * lap;
        }
    }
    if (source_cell >= 0 && source_value != 0.f)
        p_next[static_cast<std::size_t>(source_cell)] -= d.c2dt2[static_cast<std::size_t>(source_cell)] * source_value;
}

std::vector<float> step_wavefield(const SimDomain& d, const std::vector<float>& p_prev,
                                  const std::vector<float>& p_cur, float source_value, int source_cell) {
    if (p_prev.size() != d.c2dt2.size() || p_cur.size() != d.c2dt2.size())
        throw std::invalid_argument("step_wavefield: field size does not match domain");
    std::vector<float> p_next(p_cur.size());
    compute_next(d, p_prev, p_cur, p_next, source_value, source_cell);
    for (std::size_t i = 0; i < p_next.size(); ++i) p_next[i] *= d.damp[i];
    return p_next;
}

void advance(const SimDomain& d, std::vector<float>& p_prev, std::vector<float>& p_cur,
             std::vector<float>& scratch, float source_value, int source_cell) {
    compute_next(d, p_prev, p_cur, scratch, source_value, source_cell);
    // two-field damping: both the new field and the one becoming p_prev
    for (std::size_t i = 0; i < scratch.size(); ++i) {
        scratch[i] *= d.damp[i];
        p_cur[i] *= d.damp[i];
    }
    std::swap(p_prev, p_cur);  // p_prev <- damped cur
    std::swap(p_cur, scratch); // p_cur <- next
}

std::vector<float> simulate_shot(const VelocityModel& v, double f, double xs, const SimGrid& g) {
    const CflResult cfl = cfl_check(v.max_cell(), g.dx, g.dz, g.dt_sim);
    if (!cfl.stable) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "simulate_shot: dt_sim %.6e violates CFL; largest stable dt is %.6e",
                      g.dt_sim, cfl.max_dt);
        throw NumericError(buf);
    }
    if (g.record_stride < 1 || g.nt_sim % g.record_stride != 0)
        throw ConfigError("simulate_shot: record_stride must divide nt_sim");
    const int col = static_cast<int>(std::lround(xs / g.dx));
    if (col < 0 || col >= g.nx) throw DataError("simulate_shot: source position outside the model width");

    const SimDomain d = make_domain(v, g);
    const std::vector<float> wavelet = ricker_wavelet(f, g.dt_sim, g.nt_sim, 1.2 / f);
    const int src = d.surface_index(col);
    const int t_rec = g.nt_sim / g.record_stride;

    std::vector<float> prev(d.c2dt2.size(), 0.f), cur(d.c2dt2.size(), 0.f), scratch(d.c2dt2.size(), 0.f);
    std::vector<float> traces(static_cast<std::size_t>(t_rec) * g.nx);
    int out_row = 0;
    for (int step = 0; step < g.nt_sim; ++step) {
        advance(d, prev, cur, scratch, wavelet[static_cast<std::size_t>(step)], src);
        if ((step + 1) % g.record_stride == 0) {
            const float* surface = cur.data() + d.surface_index(0);
            std::copy_n(surface, g.nx, traces.data() + static_cast<std::size_t>(out_row) * g.nx);
            ++out_row;
        }
    }
    return traces;
}

ShotGather forward_model(const VelocityModel& v, const SourceSet& sources, const SimGrid& g) {
    ShotGather gather;
    gather.n_sources = static_cast<int>(sources.size());
    gather.nt = g.nt_sim / g.record_stride;
    gather.n_receivers = g.nx;
    gather.dt_record = g.dt_sim * g.record_stride;
    gather.data.resize(static_cast<std::size_t>(gather.n_sources) * gather.nt * gather.n_receivers);
    for (std::size_t s = 0; s < sources.size(); ++s) {
        const std::vector<float> traces = simulate_shot(v, sources[s].frequency_hz, sources[s].x_m, g);
        std::copy(traces.begin(), traces.end(),
                  gather.data.begin() + static_cast<std::ptrdiff_t>(s * traces.size()));
    }
    return gather;
}

SimGrid make_sim_grid(double v_max, int t_record, double dt_record, int nx, int nz, double dx, double dz,
                      int sponge_width, double sponge_strength) {
    if (v_max <= 0 || t_record < 1 || dt_record <= 0) throw ConfigError("make_sim_grid: invalid parameters");
    const double max_dt = cfl_check(v_max, dx, dz, 0.0).max_dt;
    int k = static_cast<int>(std::ceil(dt_record / max_dt - 1e-12));
    if (k < 1) k = 1;
    SimGrid g;
    g.nx = nx;
    g.nz = nz;
    g.dx = dx;
    g.dz = dz;
    g.record_stride = k;
    g.dt_sim = dt_record / k;
    g.nt_sim = t_record * k;
    g.sponge_width = sponge_width;
    g.sponge_strength = sponge_strength;
    return g;
}

}  // namespace fwionet
