#pragma once

// Double-excitation probability, extinction ratio and the per-sample flux
// record. The flux rate itself is computed by the hierarchy engine.

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "network.hpp"
#include "operator.hpp"

namespace slhswitch {

struct ExcitationProbabilities {
    double p2 = 0.0;
    double p1e = 0.0;
    double p2g = 0.0;
};

/// P2 = Tr[rho |1,e><1,e|] + Tr[rho |2,g><2,g|]; in variant B the cavity-2
/// factor is traced out (projector tensored with identity).
inline ExcitationProbabilities p2(const Operator &rho_top, const SpaceSignature &signature)
{
    if (rho_top.signature() != signature)
        throw Error(ErrorKind::signature_mismatch, "p2: state does not live in " + signature.to_string());
    if (signature.size() < 2 || signature[qubit_slot] != 2)
        throw Error(ErrorKind::invalid_argument, "p2: signature has no qubit factor");
    if (signature[cavity1_slot] < 3)
        throw Error(ErrorKind::invalid_argument, "p2: cavity cutoff below 2 leaves |2,g> undefined");

    auto local_projector = [](std::size_t dim, std::size_t level) {
        Matrix m = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        m(static_cast<Eigen::Index>(level), static_cast<Eigen::Index>(level)) = 1.0;
        return Operator{std::move(m)};
    };
    const std::size_t dc = signature[cavity1_slot];
    const Operator proj_1e = embed(local_projector(dc, 1), cavity1_slot, signature)
                             * embed(local_projector(2, 1), qubit_slot, signature);
    const Operator proj_2g = embed(local_projector(dc, 2), cavity1_slot, signature)
                             * embed(local_projector(2, 0), qubit_slot, signature);

    ExcitationProbabilities out;
    out.p1e = (rho_top * proj_1e).trace().real();
    out.p2g = (rho_top * proj_2g).trace().real();
    out.p2 = out.p1e + out.p2g;
    return out;
}

struct ExtinctionRatio {
    double db = std::numeric_limits<double>::infinity();
    bool finite = false;
};

/// R = 10 log10(on / off). A non-positive `off` yields the +inf sentinel
/// with finite == false.
inline ExtinctionRatio extinction_ratio(double phi_on, double phi_off)
{
    if (!(phi_off > 0.0) || !(phi_on > 0.0))
        return {};
    return {10.0 * std::log10(phi_on / phi_off), true};
}

/// One recorded sample of a trajectory.
struct FluxSample {
    double t = 0.0;
    std::array<double, channel_count> phi{};
    std::array<double, channel_count> Phi{};
    double p2 = 0.0;
    double p1e = 0.0;
    double p2g = 0.0;
    std::array<double, channel_count> gamma{};
};

struct FluxRecord {
    std::vector<FluxSample> samples;

    double max_p2() const
    {
        double m = 0.0;
        for (const auto &s : samples)
            m = std::max(m, s.p2);
        return m;
    }

    const FluxSample &back() const { return samples.back(); }
};

} // namespace slhswitch
