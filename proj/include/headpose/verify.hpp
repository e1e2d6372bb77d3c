#pragma once

#include <string>
#include <vector>

#include "headpose/losses.hpp"
#include "headpose/rng.hpp"

namespace headpose {

// Random stage-objective configuration for gradient checking. Every L1 input
// (head/camera/image coordinate differences, edge-length differences, the
// rotation residual) is kept away from its kink by a margin that a 1e-4
// finite-difference step cannot cross, so the central-difference oracle is
// valid at every coordinate.
struct GradcheckFixture {
    GroundTruth gt;
    CameraIntrinsics K;
    BBoxInfo bbox;
    StageParams params;  // T_direct set when built for the direct mode
};

GradcheckFixture make_gradcheck_fixture(Rng& rng, bool direct_translation, int n_points = 8);

// Smallest |pred - gt| across every L1 term of the stage objective; zero
// when the geometry is degenerate for checking.
double stage_kink_margin(const StageParams& p, const GroundTruth& gt, const BBoxInfo& bbox,
                         const CameraIntrinsics& K);

struct CheckResult {
    std::string module;
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool upper_bound = true;  // pass means measured < tolerance; else measured >= tolerance
    bool pass = false;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    int failures() const {
        int n = 0;
        for (const auto& c : checks)
            if (!c.pass) ++n;
        return n;
    }
};

// Runs every module's property checks: round-trips, invariances, gradient
// oracles, determinism probes, and a fault-injection canary that proves the
// round-trip check actually bites.
VerifyReport run_verify_suite();

}  // namespace headpose
