#pragma once

#include <filesystem>
#include <string>

#include "mapexit/model.hpp"

namespace mapexit {

/// Parses a model document. Schema errors and unknown keys raise ValidationError;
/// the structural invariants are not checked here (see validate()).
[[nodiscard]] MapModel parse_model(const std::string& json_text);

[[nodiscard]] MapModel load_model(const std::filesystem::path& path);

/// Inverse of parse_model; auxiliary phases are not representable and rejected.
[[nodiscard]] std::string dump_model(const MapModel& model);

}  // namespace mapexit
