#include "fmv/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fmv/errors.hpp"
#include "fmv/version.hpp"

namespace fmv {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string to_hex(const unsigned char* digest, unsigned len) {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string hash_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  // Fold per-file hashes with their relative names so renames change the
  // digest too, not just content edits.
  std::string acc;
  for (const auto& f : files) {
    acc += f.lexically_relative(dir).generic_string();
    acc.push_back('\0');
    acc += sha256_file_hex(f);
    acc.push_back('\n');
  }
  return sha256_hex(acc);
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256: EVP_Digest failed");
  }
  return to_hex(digest, len);
}

std::string sha256_file_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for hashing: " + path.string());

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha256: EVP_MD_CTX_new failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);

  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return to_hex(digest, len);
}

std::string make_run_id(const std::string& stage, const std::string& config_json,
                        const std::vector<ArtifactRef>& inputs) {
  std::string material = stage;
  material.push_back('\0');
  material += config_json;
  for (const auto& ref : inputs) {
    material.push_back('\0');
    material += ref.sha256;
  }
  return sha256_hex(material).substr(0, 16);
}

fs::path manifest_path_for(const fs::path& artifact) {
  if (fs::is_directory(artifact)) return artifact / "manifest.json";
  return fs::path(artifact.string() + ".manifest.json");
}

void write_manifest(const RunManifest& manifest, const fs::path& artifact) {
  ordered_json j;
  j["run_id"] = manifest.run_id;
  j["stage"] = manifest.stage;
  j["tool_version"] = manifest.tool_version;
  j["created_utc"] = manifest.created_utc;
  j["config"] = ordered_json::parse(manifest.config_json);
  auto refs = [](const std::vector<ArtifactRef>& v) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : v) arr.push_back({{"path", r.path}, {"sha256", r.sha256}});
    return arr;
  };
  j["inputs"] = refs(manifest.inputs);
  j["outputs"] = refs(manifest.outputs);

  std::ofstream out(manifest_path_for(artifact));
  if (!out) {
    throw DataError("cannot write manifest for " + artifact.string());
  }
  out << j.dump(2) << '\n';
}

namespace {

ordered_json load_manifest_json(const fs::path& side) {
  std::ifstream in(side);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("corrupt manifest " + side.string() + ": " + e.what());
  }
  return j;
}

// File artifacts record their own hash in the producing stage's sidecar.
void verify_file_against_sidecar(const fs::path& path, const std::string& hash) {
  const fs::path side = manifest_path_for(path);
  if (!fs::exists(side)) return;
  const ordered_json j = load_manifest_json(side);
  for (const auto& out : j.value("outputs", ordered_json::array())) {
    if (fs::path(out.value("path", "")).filename() == path.filename() &&
        out.value("sha256", "") != hash) {
      throw DataError("input " + path.string() +
                      " does not match its manifest; recorded " +
                      out.value("sha256", "") + ", found " + hash);
    }
  }
}

// Directory artifacts carry manifest.json inside; its outputs list member
// files by name, which the check resolves relative to the directory.
void verify_dir_against_sidecar(const fs::path& dir) {
  const fs::path side = dir / "manifest.json";
  if (!fs::exists(side)) return;
  const ordered_json j = load_manifest_json(side);
  for (const auto& out : j.value("outputs", ordered_json::array())) {
    const fs::path member = dir / fs::path(out.value("path", "")).filename();
    if (!fs::exists(member)) {
      throw DataError("input " + dir.string() + " is missing " +
                      member.filename().string() + " listed in its manifest");
    }
    const std::string hash = sha256_file_hex(member);
    if (out.value("sha256", "") != hash) {
      throw DataError("input " + member.string() +
                      " does not match its manifest; recorded " +
                      out.value("sha256", "") + ", found " + hash);
    }
  }
}

}  // namespace

ArtifactRef check_input_artifact(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("input not found: " + path.string());

  ArtifactRef ref;
  ref.path = path.string();
  if (fs::is_directory(path)) {
    verify_dir_against_sidecar(path);
    ref.sha256 = hash_directory(path);
  } else {
    ref.sha256 = sha256_file_hex(path);
    verify_file_against_sidecar(path, ref.sha256);
  }
  return ref;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace fmv
