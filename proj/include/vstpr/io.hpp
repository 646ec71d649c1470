#pragma once

#include "vstpr/analysis.hpp"
#include "vstpr/config.hpp"
#include "vstpr/faraday.hpp"
#include "vstpr/imaging.hpp"
#include "vstpr/resonance.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace vstpr {

using Json = nlohmann::json;

// 16-bit big-endian PGM. Counts are mapped linearly: count = offset + scale * value.
struct PgmScale {
  double scale = 1.0;
  double offset = 0.0;
};

std::string encode_pgm(const Frame& f, PgmScale* used = nullptr);
// Writes `path` and the sidecar `path` with extension replaced by .json.
void write_pgm(const Frame& f, const std::string& path);
Frame read_pgm(const std::string& path);
std::string sidecar_path(const std::string& pgm_path);

// 8-bit grayscale, min..max rescaled (difference frames: symmetric about zero).
std::vector<std::uint8_t> encode_png(const Frame& f);
void write_png(const Frame& f, const std::string& path);

void write_frame_csv(const Frame& f, const std::string& path);
// Counts only; metadata is left at defaults apart from the size.
Frame read_frame_csv(const std::string& path);

std::string profile_csv(const Profile& p);
void write_profile_csv(const Profile& p, const std::string& path);
Profile read_profile_csv(const std::string& path);

void write_trace_csv(const FaradayTrace& tr, const std::string& path);
FaradayTrace read_trace_csv(const std::string& path);

Json to_json(const FrameMeta& m);
FrameMeta meta_from_json(const Json& j);
Json to_json(const PulseConfig& p);
Json to_json(const StripeFitResult& r);
Json to_json(const ScanFitResult& r);
Json to_json(const CalibrationResult& r);
CalibrationResult calibration_from_json(const Json& j);
Json to_json(const FrequencyEstimate& r);
Json to_json(const FaradayParams& p);
Json to_json(const Profile& p);

// Sorted keys, two-space indent, trailing newline.
std::string dump(const Json& j);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

} // namespace vstpr
