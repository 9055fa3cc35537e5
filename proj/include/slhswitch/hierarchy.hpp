#pragma once

// Fock-state master-equation hierarchy for single-photon inputs on channels
// 1 (signal) and 3 (control), vacuum on channel 2.
//
// Each generalized density operator rho_{m,n} obeys
//
//   d/dt rho_{m,n} = -i[H(t), rho_{m,n}] + sum_i D[L_i(t)] rho_{m,n}
//                    + sum_j sqrt(m_j) xi_j(t)  [rho_{m-e_j,n}, L_j^dagger]
//                    + sum_j sqrt(n_j) xi_j*(t) [L_j, rho_{m,n-e_j}]
//
// with an identity scattering matrix, so the two-photon scattering source
// vanishes. The system is lower-triangular in the labels and every label is
// advanced together as one stacked RK4 state.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#if defined(__SSE2__) || defined(_M_X64)
#include <xmmintrin.h>
#endif

#include "error.hpp"
#include "network.hpp"
#include "observables.hpp"
#include "operator.hpp"

namespace slhswitch {

using Occupancy = std::array<int, channel_count>;

struct OccupancyLabel {
    Occupancy m{};
    Occupancy n{};

    int total() const
    {
        int s = 0;
        for (std::size_t i = 0; i < channel_count; ++i)
            s += m[i] + n[i];
        return s;
    }

    bool diagonal() const { return m == n; }

    OccupancyLabel conjugate() const { return {n, m}; }

    /// Ascending by total occupancy, ties broken lexicographically on (m, n).
    friend std::strong_ordering operator<=>(const OccupancyLabel &a, const OccupancyLabel &b)
    {
        if (auto c = a.total() <=> b.total(); c != 0)
            return c;
        if (auto c = a.m <=> b.m; c != 0)
            return c;
        return a.n <=> b.n;
    }
    friend bool operator==(const OccupancyLabel &, const OccupancyLabel &) = default;

    std::string to_string() const
    {
        std::string s;
        for (int v : m)
            s += static_cast<char>('0' + v);
        s += ',';
        for (int v : n)
            s += static_cast<char>('0' + v);
        return s;
    }
};

/// Labels stored by the canonical half: m >= n lexicographically. The rest
/// follow from rho_{n,m} = rho_{m,n}^dagger.
inline bool is_canonical(const OccupancyLabel &l) { return l.m >= l.n; }

struct Scenario {
    NetworkSpec spec;
    double t_start = 0.0;
    double t_end = 50.0;
    double dt = 5e-4;
    int record_stride = 100;
    /// Evolve all labels instead of the canonical half plus conjugation.
    bool full_hierarchy = false;
    /// Integrate on the whole truncated space instead of the subspace with
    /// at most as many excitations as input photons.
    bool full_space = false;

    bool signal_present() const { return spec.signal.present; }
    bool control_present() const { return spec.control.present; }

    Occupancy occupancy() const
    {
        return {signal_present() ? 1 : 0, 0, control_present() ? 1 : 0};
    }

    int photon_count() const { return (signal_present() ? 1 : 0) + (control_present() ? 1 : 0); }

    OccupancyLabel top_label() const { return {occupancy(), occupancy()}; }

    void validate() const
    {
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw Error(ErrorKind::invalid_argument, "integration step dt must be > 0");
        if (!(t_end > t_start))
            throw Error(ErrorKind::invalid_argument, "T_end must exceed the start time");
        if (record_stride < 1)
            throw Error(ErrorKind::invalid_argument, "record_stride must be >= 1");
        for (const PulseSpec *p : {&spec.signal, &spec.control}) {
            if (!p->present)
                continue;
            if (!(p->bandwidth > 0.0))
                throw Error(ErrorKind::invalid_argument, "pulse bandwidth must be > 0");
            if (!(t_end > p->arrival))
                throw Error(ErrorKind::invalid_argument, "T_end must exceed every pulse arrival time");
        }
        const PhysicalRates &r = spec.rates;
        if (!(r.g > 0.0))
            throw Error(ErrorKind::invalid_argument, "g must be > 0");
        if (r.J < 0.0 || r.gamma1 < 0.0 || r.gamma2 < 0.0 || r.gamma3 < 0.0)
            throw Error(ErrorKind::invalid_argument, "rates must be >= 0");
        if (spec.cavity_cutoff < 1 || spec.cavity2_cutoff < 1)
            throw Error(ErrorKind::invalid_argument, "cavity cutoffs must be >= 1");
    }
};

/// All labels with m_i, n_i bounded by the channel occupancies, ordered
/// ascending by total occupancy.
inline std::vector<OccupancyLabel> build_labels(const Scenario &scenario)
{
    const Occupancy occ = scenario.occupancy();
    std::vector<Occupancy> sides;
    for (int a = 0; a <= occ[0]; ++a)
        for (int c = 0; c <= occ[2]; ++c)
            sides.push_back({a, 0, c});
    std::vector<OccupancyLabel> labels;
    for (const auto &m : sides)
        for (const auto &n : sides)
            labels.push_back({m, n});
    std::sort(labels.begin(), labels.end());
    return labels;
}

/// The labels actually integrated for this scenario.
inline std::vector<OccupancyLabel> evolved_labels(const Scenario &scenario)
{
    auto labels = build_labels(scenario);
    if (!scenario.full_hierarchy)
        std::erase_if(labels, [](const OccupancyLabel &l) { return !is_canonical(l); });
    return labels;
}

struct HierarchyState {
    std::vector<OccupancyLabel> labels;
    std::vector<Operator> entries;
    std::array<double, channel_count> flux{};
    double time = 0.0;

    std::optional<std::size_t> index_of(const OccupancyLabel &l) const
    {
        const auto it = std::find(labels.begin(), labels.end(), l);
        if (it == labels.end())
            return std::nullopt;
        return static_cast<std::size_t>(it - labels.begin());
    }

    bool contains(const OccupancyLabel &l) const { return index_of(l).has_value(); }

    const Operator &at(const OccupancyLabel &l) const
    {
        if (auto i = index_of(l))
            return entries[*i];
        throw Error(ErrorKind::missing_label, "label " + l.to_string() + " is not stored");
    }

    /// Stored entry, or the adjoint of the conjugate label's entry.
    Operator get(const OccupancyLabel &l) const
    {
        if (auto i = index_of(l))
            return entries[*i];
        if (auto i = index_of(l.conjugate()))
            return entries[*i].adjoint();
        throw Error(ErrorKind::missing_label, "label " + l.to_string() + " and its conjugate are missing");
    }
};

/// Ground state |0,g(,0)><0,g(,0)| on diagonal labels, zero elsewhere.
inline HierarchyState initial_state(const Scenario &scenario)
{
    const SpaceSignature sig = scenario.spec.signature();
    std::vector<std::size_t> ground(sig.size(), 0);
    const Operator rho0 = basis_projector(std::span<const std::size_t>(ground), sig);
    HierarchyState state;
    state.labels = evolved_labels(scenario);
    state.time = scenario.t_start;
    for (const auto &l : state.labels)
        state.entries.push_back(l.diagonal() ? rho0 : Operator::zero(sig));
    return state;
}

/// Complete a canonical-half state with the conjugate labels. Applying it
/// to an already complete state is a no-op.
inline HierarchyState conjugate_closure(const HierarchyState &state)
{
    HierarchyState out = state;
    for (std::size_t k = 0; k < state.labels.size(); ++k) {
        const OccupancyLabel c = state.labels[k].conjugate();
        if (!out.contains(c)) {
            out.labels.push_back(c);
            out.entries.push_back(state.entries[k].adjoint());
        }
    }
    std::vector<std::size_t> order(out.labels.size());
    for (std::size_t k = 0; k < order.size(); ++k)
        order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return out.labels[a] < out.labels[b]; });
    HierarchyState sorted;
    sorted.flux = out.flux;
    sorted.time = out.time;
    for (std::size_t k : order) {
        sorted.labels.push_back(out.labels[k]);
        sorted.entries.push_back(out.entries[k]);
    }
    return sorted;
}

inline Occupancy decrement(Occupancy o, std::size_t channel)
{
    o[channel] -= 1;
    return o;
}

struct HierarchyDerivative {
    std::vector<Operator> entries;
    std::array<double, channel_count> flux_rate{};
};

/// Output flux of channel i evaluated on the scenario's top label:
///   E_{m,n}[Li^dag Li] + sqrt(n_i) xi_i E_{m,n-e_i}[Li^dag]
///   + sqrt(m_i) xi_i* E_{m-e_i,n}[Li] + sqrt(m_i n_i) |xi_i|^2 E_{m-e_i,n-e_i}[I]
/// with E_{m,n}[O] = Tr[rho_{m,n}^dagger O]. Rates and envelopes are
/// right-continuous at t. Dense reference implementation.
inline double photon_flux(const HierarchyState &state, std::size_t channel, double t,
                          const Scenario &scenario)
{
    if (channel >= channel_count)
        throw Error(ErrorKind::invalid_argument, "channel index out of range");
    const NetworkSpec &spec = scenario.spec;
    const auto L = coupling_ops(spec, t);
    const Operator &Li = L[channel];
    const OccupancyLabel top = scenario.top_label();
    const cplx x = xi_complex(spec.pulse(channel), t);
    const int mi = top.m[channel];
    const int ni = top.n[channel];

    cplx phi = expectation(state.get(top), Li.adjoint() * Li);
    if (ni > 0)
        phi += x * expectation(state.get({top.m, decrement(top.n, channel)}), Li.adjoint());
    if (mi > 0)
        phi += std::conj(x) * expectation(state.get({decrement(top.m, channel), top.n}), Li);
    if (mi > 0 && ni > 0) {
        const Operator &lower = state.get({decrement(top.m, channel), decrement(top.n, channel)});
        phi += std::norm(x) * expectation(lower, Operator::identity(lower.signature()));
    }
    return phi.real();
}

/// Right-hand side of the hierarchy for every stored label plus the flux
/// rates of the three channels. Rates and envelopes are right-continuous at
/// t. This is the plain dense form used as the reference for the compiled
/// integrator.
inline HierarchyDerivative rhs(const HierarchyState &state, double t, const Scenario &scenario)
{
    const NetworkSpec &spec = scenario.spec;
    const Operator H = hamiltonian(spec, t);
    const auto L = coupling_ops(spec, t);
    const cplx minus_i{0.0, -1.0};

    HierarchyDerivative out;
    for (std::size_t k = 0; k < state.labels.size(); ++k) {
        const OccupancyLabel &lab = state.labels[k];
        const Operator &rho = state.entries[k];
        Operator d = minus_i * (H * rho - rho * H);
        for (const auto &Li : L) {
            const Operator LdL = Li.adjoint() * Li;
            d += Li * rho * Li.adjoint() - cplx{0.5} * (LdL * rho + rho * LdL);
        }
        for (std::size_t j = 0; j < channel_count; ++j) {
            const cplx x = xi_complex(spec.pulse(j), t);
            if (lab.m[j] > 0) {
                const Operator lower = state.get({decrement(lab.m, j), lab.n});
                const Operator Ld = L[j].adjoint();
                d += (std::sqrt(static_cast<double>(lab.m[j])) * x) * (lower * Ld - Ld * lower);
            }
            if (lab.n[j] > 0) {
                const Operator lower = state.get({lab.m, decrement(lab.n, j)});
                d += (std::sqrt(static_cast<double>(lab.n[j])) * std::conj(x))
                     * (L[j] * lower - lower * L[j]);
            }
        }
        out.entries.push_back(std::move(d));
    }
    for (std::size_t i = 0; i < channel_count; ++i)
        out.flux_rate[i] = photon_flux(state, i, t, scenario);
    return out;
}

namespace detail {

/// Nonzero entries of a small operator, used by the integrator's kernels.
struct SparseTerms {
    struct Entry {
        Eigen::Index r;
        Eigen::Index c;
        cplx v;
    };
    std::vector<Entry> entries;

    SparseTerms() = default;
    explicit SparseTerms(const Matrix &m)
    {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                if (m(r, c) != cplx{})
                    entries.push_back({r, c, m(r, c)});
    }
};

// out += a * S X
inline void add_left(Matrix &out, const SparseTerms &S, const Matrix &X, cplx a)
{
    for (const auto &e : S.entries)
        out.row(e.r) += (a * e.v) * X.row(e.c);
}

// out += a * X S
inline void add_right(Matrix &out, const Matrix &X, const SparseTerms &S, cplx a)
{
    for (const auto &e : S.entries)
        out.col(e.c) += (a * e.v) * X.col(e.r);
}

// out += a * S^dagger X
inline void add_left_adjoint(Matrix &out, const SparseTerms &S, const Matrix &X, cplx a)
{
    for (const auto &e : S.entries)
        out.row(e.c) += (a * std::conj(e.v)) * X.row(e.r);
}

// out += a * X S^dagger
inline void add_right_adjoint(Matrix &out, const Matrix &X, const SparseTerms &S, cplx a)
{
    for (const auto &e : S.entries)
        out.col(e.r) += (a * std::conj(e.v)) * X.col(e.c);
}

// out += a * S X S^dagger
inline void add_sandwich(Matrix &out, const SparseTerms &S, const Matrix &X, cplx a)
{
    for (const auto &e1 : S.entries)
        for (const auto &e2 : S.entries)
            out(e1.r, e2.r) += a * e1.v * std::conj(e2.v) * X(e1.c, e2.c);
}

/// Excitation number n1 + q (+ n2) of every flat basis index.
inline std::vector<int> excitation_numbers(const SpaceSignature &sig)
{
    std::vector<int> out(sig.dimension(), 0);
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        std::size_t rest = flat;
        int total = 0;
        for (std::size_t k = sig.size(); k-- > 0;) {
            total += static_cast<int>(rest % sig[k]);
            rest /= sig[k];
        }
        out[flat] = total;
    }
    return out;
}

} // namespace detail

namespace detail {

/// Flushes subnormals to zero for the lifetime of the guard. Populations
/// that have decayed to ~1e-300 otherwise slow every step by an order of
/// magnitude; values that small never reach any reported digit.
class SubnormalGuard {
public:
#if defined(__SSE2__) || defined(_M_X64)
    SubnormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
    ~SubnormalGuard() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#else
    SubnormalGuard() = default;
#endif
public:
    SubnormalGuard(const SubnormalGuard &) = delete;
    SubnormalGuard &operator=(const SubnormalGuard &) = delete;
};

} // namespace detail

/// Result of one integration run.
struct Trajectory {
    FluxRecord record;
    HierarchyState final_state; ///< complete label set, full space
    long steps = 0;
    /// max_t P2 tracked at every step, independent of record_stride.
    double max_p2 = 0.0;
    /// sum_i phi_i at T_end; the run counts as converged below 1e-6 per us.
    double flux_residual = 0.0;
    bool converged = false;
};

inline constexpr double steady_state_residual = 1e-6;
inline constexpr double divergence_ceiling = 1e3;

using Observer = std::function<void(const HierarchyState &)>;

/// Compiled form of a scenario: operators restricted to the active subspace
/// and stored as sparse term lists, label references resolved to indices.
class HierarchyIntegrator {
public:
    explicit HierarchyIntegrator(Scenario scenario) : scenario_(std::move(scenario))
    {
        scenario_.validate();
        const NetworkSpec &spec = scenario_.spec;
        signature_ = spec.signature();

        const auto excitations = detail::excitation_numbers(signature_);
        for (std::size_t k = 0; k < excitations.size(); ++k)
            if (scenario_.full_space || excitations[k] <= scenario_.photon_count())
                active_.push_back(static_cast<Eigen::Index>(k));
        dim_ = static_cast<Eigen::Index>(active_.size());

        auto restrict = [&](const Operator &op) -> Matrix { return op.matrix()(active_, active_); };

        const HamiltonianParts hp = hamiltonian_parts(spec);
        h_static_ = detail::SparseTerms(restrict(hp.static_part));
        h_exchange_ = detail::SparseTerms(restrict(hp.exchange));
        delta_sc_ = hp.delta_sc;

        const NetworkOperators ops(spec);
        const auto bare = ops.channel_operators(spec.variant);
        for (std::size_t i = 0; i < channel_count; ++i) {
            jump_[i] = detail::SparseTerms(restrict(bare[i]));
            const Matrix ldl = restrict(bare[i].adjoint() * bare[i]);
            number_[i] = ldl.diagonal().real();
        }

        labels_ = evolved_labels(scenario_);
        top_ = scenario_.top_label();
        for (const auto &lab : labels_) {
            LabelRefs refs;
            for (std::size_t j = 0; j < channel_count; ++j) {
                if (lab.m[j] > 0)
                    refs.ket_lower[j] = resolve({decrement(lab.m, j), lab.n});
                if (lab.n[j] > 0)
                    refs.bra_lower[j] = resolve({lab.m, decrement(lab.n, j)});
            }
            refs_.push_back(refs);
        }
        top_ref_ = resolve(top_);
        for (std::size_t i = 0; i < channel_count; ++i) {
            if (top_.n[i] > 0)
                flux_refs_[i].bra_lower = resolve({top_.m, decrement(top_.n, i)});
            if (top_.m[i] > 0)
                flux_refs_[i].ket_lower = resolve({decrement(top_.m, i), top_.n});
            if (top_.m[i] > 0 && top_.n[i] > 0)
                flux_refs_[i].both_lower = resolve({decrement(top_.m, i), decrement(top_.n, i)});
        }
        breakpoints_ = schedule_breakpoints(spec);

        if (signature_[cavity1_slot] >= 3) {
            const std::size_t inner = signature_.dimension() / (signature_[cavity1_slot] * 2);
            for (Eigen::Index a = 0; a < dim_; ++a) {
                const std::size_t k = static_cast<std::size_t>(active_[static_cast<std::size_t>(a)]);
                const std::size_t n1 = k / (2 * inner);
                const std::size_t q = (k / inner) % 2;
                if ((n1 == 1 && q == 1) || (n1 == 2 && q == 0))
                    p2_index_.push_back(a);
            }
        }
    }

    const Scenario &scenario() const noexcept { return scenario_; }
    Eigen::Index active_dimension() const noexcept { return dim_; }
    const std::vector<OccupancyLabel> &labels() const noexcept { return labels_; }

    Trajectory run(const std::vector<Observer> &observers = {}) const
    {
        const detail::SubnormalGuard ftz;
        const std::size_t nl = labels_.size();
        Stack y(nl, dim_), k1(nl, dim_), k2(nl, dim_), k3(nl, dim_), k4(nl, dim_), tmp(nl, dim_);
        load(initial_state(scenario_), y);

        Trajectory traj;
        const double t0 = scenario_.t_start;
        const double t1 = scenario_.t_end;

        std::vector<double> edges{t0};
        for (double b : breakpoints_)
            if (b > t0 && b < t1)
                edges.push_back(b);
        edges.push_back(t1);

        long step = 0;
        record(y, t0, traj, observers);
        for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
            const double a = edges[s];
            const double b = edges[s + 1];
            const Segment seg = segment_context(a, b);
            const long n = std::max(1L, static_cast<long>(std::ceil((b - a) / scenario_.dt - 1e-9)));
            const double h = (b - a) / static_cast<double>(n);
            for (long i = 0; i < n; ++i) {
                const double t = a + static_cast<double>(i) * h;
                const double t_next = (i + 1 == n) ? b : a + static_cast<double>(i + 1) * h;
                const double hh = t_next - t;

                derivative(y, t, seg, k1);
                axpy(tmp, y, 0.5 * hh, k1);
                derivative(tmp, t + 0.5 * hh, seg, k2);
                axpy(tmp, y, 0.5 * hh, k2);
                derivative(tmp, t + 0.5 * hh, seg, k3);
                axpy(tmp, y, hh, k3);
                derivative(tmp, t_next, seg, k4);
                for (std::size_t l = 0; l < nl; ++l)
                    y.rho[l] += (hh / 6.0) * (k1.rho[l] + 2.0 * k2.rho[l] + 2.0 * k3.rho[l] + k4.rho[l]);
                for (std::size_t c = 0; c < channel_count; ++c)
                    y.flux[c] += (hh / 6.0) * (k1.flux[c] + 2.0 * k2.flux[c] + 2.0 * k3.flux[c] + k4.flux[c]);
                ++step;
                check_divergence(y, step, t_next);
                traj.max_p2 = std::max(traj.max_p2, p2_of(y));
                const bool last = (s + 2 == edges.size()) && (i + 1 == n);
                if (last || step % scenario_.record_stride == 0)
                    record(y, t_next, traj, observers);
            }
        }
        traj.steps = step;
        traj.final_state = conjugate_closure(unload(y, t1));
        const FluxSample &fin = traj.record.back();
        traj.flux_residual = std::abs(fin.phi[0] + fin.phi[1] + fin.phi[2]);
        traj.converged = traj.flux_residual < steady_state_residual;
        return traj;
    }

    /// Compiled right-hand side, exposed for cross-checks against rhs().
    /// Rates and envelopes are right-continuous at t.
    HierarchyDerivative evaluate(const HierarchyState &state, double t) const
    {
        Stack y(labels_.size(), dim_), d(labels_.size(), dim_);
        load(state, y);
        derivative(y, t, point_context(t), d);
        HierarchyState s = unload(d, t);
        return {std::move(s.entries), d.flux};
    }

private:
    struct Ref {
        int index = -1;
        bool adjoint = false;
        bool valid() const { return index >= 0; }
    };

    struct LabelRefs {
        std::array<Ref, channel_count> ket_lower{};
        std::array<Ref, channel_count> bra_lower{};
    };

    struct FluxRefs {
        Ref bra_lower;
        Ref ket_lower;
        Ref both_lower;
    };

    struct Stack {
        std::vector<Matrix> rho;
        std::array<double, channel_count> flux{};
        Stack(std::size_t n, Eigen::Index dim) : rho(n, Matrix::Zero(dim, dim)) {}
    };

    /// Rates and envelope branches that hold on one integration segment.
    struct Segment {
        std::array<double, channel_count> gamma{};
        std::array<bool, channel_count> before_arrival{};
    };

    Segment segment_context(double a, double b) const
    {
        const double mid = 0.5 * (a + b);
        Segment seg;
        for (std::size_t i = 0; i < channel_count; ++i) {
            seg.gamma[i] = scenario_.spec.schedules[i](mid);
            seg.before_arrival[i] = mid < scenario_.spec.pulse(i).arrival;
        }
        return seg;
    }

    Segment point_context(double t) const
    {
        Segment seg;
        for (std::size_t i = 0; i < channel_count; ++i) {
            seg.gamma[i] = scenario_.spec.schedules[i](t);
            seg.before_arrival[i] = t < scenario_.spec.pulse(i).arrival;
        }
        return seg;
    }

    Ref resolve(const OccupancyLabel &l) const
    {
        for (std::size_t k = 0; k < labels_.size(); ++k) {
            if (labels_[k] == l)
                return {static_cast<int>(k), false};
        }
        for (std::size_t k = 0; k < labels_.size(); ++k) {
            if (labels_[k] == l.conjugate())
                return {static_cast<int>(k), true};
        }
        throw Error(ErrorKind::missing_label, "hierarchy references missing label " + l.to_string());
    }

    void fetch(const Stack &y, const Ref &r, Matrix &buf, const Matrix *&out) const
    {
        if (!r.adjoint) {
            out = &y.rho[static_cast<std::size_t>(r.index)];
            return;
        }
        buf = y.rho[static_cast<std::size_t>(r.index)].adjoint();
        out = &buf;
    }

    void derivative(const Stack &y, double t, const Segment &seg, Stack &d) const
    {
        const cplx minus_i{0.0, -1.0};
        const cplx plus_i{0.0, 1.0};
        const cplx phase = std::polar(1.0, -delta_sc_ * t);

        std::array<cplx, channel_count> x{};
        std::array<double, channel_count> root_gamma{};
        Eigen::ArrayXd decay = Eigen::ArrayXd::Zero(dim_);
        for (std::size_t i = 0; i < channel_count; ++i) {
            x[i] = xi_branch(scenario_.spec.pulse(i), t, seg.before_arrival[i]);
            root_gamma[i] = std::sqrt(seg.gamma[i]);
            decay += seg.gamma[i] * number_[i].array();
        }

        Matrix buf;
        for (std::size_t k = 0; k < labels_.size(); ++k) {
            const Matrix &rho = y.rho[k];
            Matrix &out = d.rho[k];

            // -i[H, rho] - 1/2 {K, rho}, K diagonal
            for (Eigen::Index c = 0; c < dim_; ++c)
                for (Eigen::Index r = 0; r < dim_; ++r)
                    out(r, c) = -0.5 * (decay(r) + decay(c)) * rho(r, c);
            detail::add_left(out, h_static_, rho, minus_i);
            detail::add_right(out, rho, h_static_, plus_i);
            detail::add_left(out, h_exchange_, rho, minus_i * phase);
            detail::add_right(out, rho, h_exchange_, plus_i * phase);
            detail::add_left_adjoint(out, h_exchange_, rho, minus_i * std::conj(phase));
            detail::add_right_adjoint(out, rho, h_exchange_, plus_i * std::conj(phase));

            for (std::size_t i = 0; i < channel_count; ++i)
                if (seg.gamma[i] != 0.0)
                    detail::add_sandwich(out, jump_[i], rho, seg.gamma[i]);

            const LabelRefs &refs = refs_[k];
            for (std::size_t j = 0; j < channel_count; ++j) {
                if (root_gamma[j] == 0.0 || x[j] == cplx{})
                    continue;
                if (refs.ket_lower[j].valid()) {
                    // xi_j [lower, L_j^dagger]
                    const Matrix *lower = nullptr;
                    fetch(y, refs.ket_lower[j], buf, lower);
                    const cplx a = x[j] * root_gamma[j];
                    detail::add_right_adjoint(out, *lower, jump_[j], a);
                    detail::add_left_adjoint(out, jump_[j], *lower, -a);
                }
                if (refs.bra_lower[j].valid()) {
                    // xi_j* [L_j, lower]
                    const Matrix *lower = nullptr;
                    fetch(y, refs.bra_lower[j], buf, lower);
                    const cplx b = std::conj(x[j]) * root_gamma[j];
                    detail::add_left(out, jump_[j], *lower, b);
                    detail::add_right(out, *lower, jump_[j], -b);
                }
            }
        }
        d.flux = flux_rates(y, x, root_gamma);
    }

    std::array<double, channel_count> flux_rates(const Stack &y, const std::array<cplx, channel_count> &x,
                                                 const std::array<double, channel_count> &root_gamma) const
    {
        std::array<double, channel_count> phi{};
        Matrix buf;
        const Matrix *top = nullptr;
        fetch(y, top_ref_, buf, top);
        const Eigen::VectorXcd top_diag = top->diagonal();
        for (std::size_t i = 0; i < channel_count; ++i) {
            if (root_gamma[i] == 0.0)
                continue;
            const double gamma = root_gamma[i] * root_gamma[i];
            // Tr[rho^dag L^dag L] with diagonal L^dag L
            cplx acc = gamma * (top_diag.conjugate().array() * number_[i].array().cast<cplx>()).sum();
            if (x[i] != cplx{}) {
                const FluxRefs &fr = flux_refs_[i];
                Matrix b2;
                if (fr.bra_lower.valid()) {
                    // xi Tr[rho'^dag L^dag] = xi conj(Tr[L rho'])
                    const Matrix *lower = nullptr;
                    fetch(y, fr.bra_lower, b2, lower);
                    cplx tr{};
                    for (const auto &e : jump_[i].entries)
                        tr += e.v * (*lower)(e.c, e.r);
                    acc += x[i] * root_gamma[i] * std::conj(tr);
                }
                if (fr.ket_lower.valid()) {
                    // xi* Tr[rho''^dag L]
                    const Matrix *lower = nullptr;
                    fetch(y, fr.ket_lower, b2, lower);
                    cplx tr{};
                    for (const auto &e : jump_[i].entries)
                        tr += std::conj((*lower)(e.r, e.c)) * e.v;
                    acc += std::conj(x[i]) * root_gamma[i] * tr;
                }
                if (fr.both_lower.valid()) {
                    const Matrix *lower = nullptr;
                    fetch(y, fr.both_lower, b2, lower);
                    acc += std::norm(x[i]) * std::conj(lower->trace());
                }
            }
            phi[i] = acc.real();
        }
        return phi;
    }

    double p2_of(const Stack &y) const
    {
        const Matrix &top = y.rho[static_cast<std::size_t>(top_ref_.index)];
        double p = 0.0;
        for (Eigen::Index a : p2_index_)
            p += top(a, a).real();
        return p;
    }

    static void axpy(Stack &out, const Stack &y, double h, const Stack &k)
    {
        for (std::size_t l = 0; l < y.rho.size(); ++l)
            out.rho[l] = y.rho[l] + h * k.rho[l];
        for (std::size_t c = 0; c < channel_count; ++c)
            out.flux[c] = y.flux[c] + h * k.flux[c];
    }

    void check_divergence(const Stack &y, long step, double t) const
    {
        for (std::size_t l = 0; l < y.rho.size(); ++l) {
            const double mx = y.rho[l].cwiseAbs().maxCoeff();
            if (!std::isfinite(mx) || mx > divergence_ceiling)
                throw DivergenceError(step, t,
                                      "hierarchy diverged at step " + std::to_string(step) + " (t = "
                                          + std::to_string(t) + ", label " + labels_[l].to_string() + ")");
        }
        for (double f : y.flux)
            if (!std::isfinite(f))
                throw DivergenceError(step, t, "flux accumulator diverged at step " + std::to_string(step));
    }

    void load(const HierarchyState &state, Stack &y) const
    {
        for (std::size_t k = 0; k < labels_.size(); ++k)
            y.rho[k] = state.get(labels_[k]).matrix()(active_, active_);
        y.flux = state.flux;
    }

    HierarchyState unload(const Stack &y, double t) const
    {
        HierarchyState s;
        s.labels = labels_;
        s.time = t;
        s.flux = y.flux;
        const auto full = static_cast<Eigen::Index>(signature_.dimension());
        for (const auto &rho : y.rho) {
            Matrix m = Matrix::Zero(full, full);
            m(active_, active_) = rho;
            s.entries.emplace_back(signature_, std::move(m));
        }
        return s;
    }

    void record(const Stack &y, double t, Trajectory &traj, const std::vector<Observer> &observers) const
    {
        const Segment seg = point_context(t);
        std::array<cplx, channel_count> x{};
        std::array<double, channel_count> root_gamma{};
        for (std::size_t i = 0; i < channel_count; ++i) {
            x[i] = xi_branch(scenario_.spec.pulse(i), t, seg.before_arrival[i]);
            root_gamma[i] = std::sqrt(seg.gamma[i]);
        }
        FluxSample sample;
        sample.t = t;
        sample.phi = flux_rates(y, x, root_gamma);
        sample.Phi = y.flux;
        sample.gamma = seg.gamma;

        const std::size_t top = static_cast<std::size_t>(top_ref_.index);
        if (signature_[cavity1_slot] >= 3) {
            const auto full = static_cast<Eigen::Index>(signature_.dimension());
            Matrix m = Matrix::Zero(full, full);
            m(active_, active_) = y.rho[top];
            const auto probs = p2(Operator{signature_, std::move(m)}, signature_);
            sample.p2 = probs.p2;
            sample.p1e = probs.p1e;
            sample.p2g = probs.p2g;
        }
        traj.record.samples.push_back(sample);

        if (!observers.empty()) {
            const HierarchyState state = unload(y, t);
            for (const auto &obs : observers)
                obs(state);
        }
    }

    Scenario scenario_;
    SpaceSignature signature_;
    std::vector<Eigen::Index> active_;
    Eigen::Index dim_ = 0;
    detail::SparseTerms h_static_;
    detail::SparseTerms h_exchange_;
    double delta_sc_ = 0.0;
    std::array<detail::SparseTerms, channel_count> jump_;
    std::array<Eigen::VectorXd, channel_count> number_;
    std::vector<OccupancyLabel> labels_;
    std::vector<LabelRefs> refs_;
    OccupancyLabel top_;
    Ref top_ref_;
    std::array<FluxRefs, channel_count> flux_refs_;
    std::vector<double> breakpoints_;
    std::vector<Eigen::Index> p2_index_;
};

/// Integrate the hierarchy over [t_start, T_end] with fixed-step RK4,
/// splitting at every schedule breakpoint and pulse arrival so no stage
/// straddles a discontinuity. Observers see the state every record_stride
/// steps and at T_end.
inline Trajectory integrate(const Scenario &scenario, const std::vector<Observer> &observers = {})
{
    return HierarchyIntegrator(scenario).run(observers);
}

} // namespace slhswitch
