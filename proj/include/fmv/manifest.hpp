#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fmv {

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);

struct ArtifactRef {
  std::string path;    // as referenced on the command line
  std::string sha256;
};

// Provenance record written next to every produced artifact
// (<artifact>.manifest.json, or <dir>/manifest.json for directories).
// run_id is derived from stage + config + input hashes, so reruns with
// unchanged inputs reproduce it; created_utc is informational only.
struct RunManifest {
  std::string run_id;
  std::string stage;
  std::string tool_version;
  std::string created_utc;
  std::string config_json;
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> outputs;
};

std::string make_run_id(const std::string& stage, const std::string& config_json,
                        const std::vector<ArtifactRef>& inputs);

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& artifact);

// Hash an input artifact and, when a manifest sidecar exists for it, verify
// the recorded hash still matches. Throws DataError on mismatch. Returns
// the ArtifactRef to record in the consuming stage's manifest. For
// directories the content hash covers every regular file, sorted by name.
ArtifactRef check_input_artifact(const std::filesystem::path& path);

std::string utc_timestamp_now();

}  // namespace fmv
