#pragma once

#include <json.hpp>
#include <string>

#include "iss/falsify.hpp"
#include "iss/hybridsim.hpp"
#include "iss/impulseseq.hpp"
#include "iss/linearize.hpp"
#include "iss/lyapcheck.hpp"
#include "iss/smallgain.hpp"

namespace iss {

using json = nlohmann::ordered_json;

json to_json(const ImpulseSequence& seq);
/// {"t0": .., "horizon": .., "times": [..]}; throws std::invalid_argument.
ImpulseSequence sequence_from_json(const json& j);

json to_json(const Vec& v);
json to_json(const InputSignal& u);
json trajectory_json(const SystemDef& sys, const HybridTrajectory& traj);

/// Expression-backed functions as {"expr", "var", "class"}; others carry only
/// a description.
json fn_json(const ScalarFn& f);
/// Same schema as certificates declared in a config file.
json certificate_json(const LyapunovCandidate& L, const std::string& system);
json to_json(const CertificateReport& rep);
json to_json(const FdtResult& r);
json to_json(const Membership& m);
json to_json(const SmallGainResult& r);
json to_json(const OmegaPath& p);
json to_json(const PowerMax& p);
json to_json(const TradeoffCurve& c);
json to_json(const Eigen::MatrixXd& M);
json to_json(const Linearization& lin);
json to_json(const QuadraticCertificate& q);
json to_json(const EnvelopeFit& fit);
json to_json(const GsResult& gs);
json to_json(const TightnessReport& rep);

/// Per-trial peak norms: trial, seed, x0_norm, input_norm, impulses, peak,
/// diverged, diverged_at, sequence.
std::string trials_csv(const std::vector<TrialSummary>& trials);

/// Two-space indented dump with a trailing newline.
std::string dump(const json& j);

}  // namespace iss
