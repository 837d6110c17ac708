#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mapexit/mcsim.hpp"

namespace mapexit {

struct VerifyOptions {
    std::size_t paths = 20000;
    std::uint64_t seed = 1;
    double threshold = 4.0;  // max |z| for Monte Carlo checks
    double dt = 1e-3;
    bool simulate = true;
};

struct CheckRecord {
    std::string identity;
    std::map<std::string, double> params;
    bool monte_carlo = false;
    Matrix analytic;
    std::optional<Matrix> mc, stderr_;
    double statistic = 0.0;  // max |z| (Monte Carlo) or max abs defect (analytic)
    double tolerance = 0.0;
    bool pass = false;
    bool skipped = false;
    std::string note;
};

struct VerifyReport {
    std::vector<CheckRecord> checks;
    std::size_t passed = 0, failed = 0, skipped = 0;

    [[nodiscard]] bool ok() const { return failed == 0; }
};

/// |mc - analytic| / sqrt(se^2 + (1/n)^2), maximized over entries.
[[nodiscard]] double max_z_score(const Matrix& analytic, const Matrix& mc, const Matrix& se, std::size_t n);

/// Analytic invariant suite plus Monte Carlo cross-checks of the exit identities.
[[nodiscard]] VerifyReport run_verify(const MapModel& model, const VerifyOptions& opt);

[[nodiscard]] std::string report_json(const VerifyReport& report, const VerifyOptions& opt);
[[nodiscard]] std::string report_text(const VerifyReport& report);

}  // namespace mapexit
