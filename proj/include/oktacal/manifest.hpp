#pragma once

// Run manifests: small JSON records stored next to every output, holding
// the canonical configuration, its digest, the seeds and content digests of
// the inputs and outputs. They carry no timestamps, so rerunning from a
// manifest reproduces it byte for byte.

#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include <json.hpp>

#include "oktacal/config.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/text_io.hpp"

namespace oktacal {

inline constexpr const char* kOktacalVersion = "0.1.0";
inline constexpr int kManifestVersion = 1;

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path + "' for hashing");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(bytes));
}

inline std::string json_digest(const Json& j) { return hex64(fnv1a64(j.dump())); }

/// Skeleton shared by every command's manifest.
inline Json manifest_base(const std::string& command, const Json& config) {
    return {{"format", "oktacal-manifest"},
            {"manifest_version", kManifestVersion},
            {"tool_version", kOktacalVersion},
            {"command", command},
            {"config", config},
            {"config_digest", json_digest(config)}};
}

inline void write_manifest(const Json& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest '" + path + "'");
    out << manifest.dump(2) << '\n';
    if (!out) throw Error("failed writing manifest '" + path + "'");
}

inline Json read_manifest(const std::string& path) {
    const Json j = read_json_file(path);
    if (!j.is_object() || j.value("format", "") != "oktacal-manifest")
        throw ConfigError("'" + path + "' is not an oktacal manifest");
    if (!j.contains("config") || !j.contains("command")) throw ConfigError("manifest lacks a config section");
    if (j.at("config_digest") != json_digest(j.at("config")))
        throw ConfigError("manifest config does not match its digest");
    return j;
}

/// Experiment configuration recorded by a `run` manifest.
inline ExperimentConfig experiment_config_from_manifest(const Json& manifest) {
    if (manifest.at("command") != "run") throw ConfigError("manifest was not written by a run");
    return experiment_config_from_json(manifest.at("config"));
}

}  // namespace oktacal
