#pragma once

// Model file: a magic line, the header length, a JSON header (format
// version, schema, codecs, architecture, metadata) and a binary section of
// named, length-prefixed little-endian f64 blocks closed by a checksum.

#include "copulaflow/trainer.hpp"

#include <string>

namespace copulaflow {

inline constexpr int kModelFormatVersion = 1;

std::string
serialize_model(const FittedModel& model);

//! Throws VersionError for another format version and IntegrityError for a
//! truncated or corrupted file.
FittedModel
deserialize_model(const std::string& bytes);

//! Atomic write (temporary file, then rename).
void
save_model(const FittedModel& model, const std::string& path);

FittedModel
load_model(const std::string& path);

} // namespace copulaflow
