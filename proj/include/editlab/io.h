#ifndef EDITLAB_IO_H_
#define EDITLAB_IO_H_

// Text formats: environment config documents (JSON), edit logs and run
// traces (CSV), learned policies (JSON with a metadata header).

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "editlab/env_core.h"
#include "editlab/error.h"
#include "editlab/online_learners.h"

namespace editlab {

using Json = nlohmann::json;

// Typed lookups that turn missing keys and type mismatches into
// ConfigError.
template <typename T>
T JsonGet(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string("missing key '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
T JsonGetOr(const Json& j, const char* key, T fallback) {
  return j.is_object() && j.contains(key) ? JsonGet<T>(j, key) : fallback;
}

// 17 significant digits ("%.17g"); reads back to the same double.
std::string FormatDouble(double v);

// Pretty-printed JSON whose numbers use FormatDouble; non-finite numbers
// become null.
std::string DumpJson(const Json& j, int indent = 2);

Json ReadJsonFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);

// Resolves {"file": "relative/path.json"} against base_dir; other values
// are returned unchanged.
Json ResolveFileRef(const Json& spec, const std::filesystem::path& base_dir);

// Builds an environment from a config document. See README for the schema.
// Throws ConfigError on anything malformed.
Environment ParseEnvironment(const Json& spec,
                             const std::filesystem::path& base_dir = {});
// Explicit form: spaces, rho, pi_ref, user table, metric, beta.
Json EnvironmentToJson(const Environment& env);

Json PolicyToJson(const Policy& pi);
Policy PolicyFromJson(const Json& j);

// Policy table plus a free-form metadata object.
struct PolicyFile {
  Policy policy;
  Json meta = Json::object();
};
std::string SerializePolicyFile(const PolicyFile& file,
                                const Environment& env);
PolicyFile ParsePolicyFile(const std::string& text, const Environment& env);

// Header `x,y,y_edit,cost`; indices into the environment's spaces.
std::string SerializeDataset(const EditDataset& data);
EditDataset ParseDataset(const std::string& text);

inline constexpr const char* kRunCsvHeader =
    "t,method,arm,cost,cum_cost,subopt,cum_regret";
// Header kRunCsvHeader; optionally without the header line for appending.
std::string SerializeRunRecord(const RunRecord& run, bool with_header = true);
std::vector<RoundRecord> ParseRunCsv(const std::string& text);

std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace editlab

#endif  // EDITLAB_IO_H_
