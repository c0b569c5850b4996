#pragma once

#include <string>

#include "core/dual.hpp"
#include "core/gp.hpp"
#include "core/metrics.hpp"

namespace ksos {

// Model artifacts are JSON; numbers round-trip exactly and A is stored as a
// dense lower triangle. Loading rebuilds the kernel factorizations from the
// stored training inputs and jitter.
void save_model(const KsosModel& model, const std::string& path);
KsosModel load_model(const std::string& path);

void save_band(const CalibratedModel& cal, const std::string& path);
CalibratedModel load_band(const std::string& path);

std::string metrics_report_json(const MetricsReport& report);

}  // namespace ksos
