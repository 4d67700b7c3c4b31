#pragma once

namespace cotflow {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kCheckpointVersion = 1;
inline constexpr int kCertificateSchemaVersion = 1;

}  // namespace cotflow
