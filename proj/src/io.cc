#include "editlab/io.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "editlab/error.h"
#include "editlab/user_models.h"

namespace editlab {
namespace fs = std::filesystem;

std::string FormatDouble(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void DumpJsonTo(const Json& j, int indent, int depth, std::string& out) {
  const std::string pad(static_cast<size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? FormatDouble(v) : "null";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Numeric rows stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) {
        return e.is_primitive();
      });
      out += '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",";
        if (!flat) out += "\n" + pad;
        DumpJsonTo(e, indent, depth + 1, out);
        first = false;
      }
      if (!flat) out += "\n" + close_pad;
      out += ']';
      return;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        out += "\n" + pad + Json(key).dump() + ": ";
        DumpJsonTo(value, indent, depth + 1, out);
        first = false;
      }
      out += "\n" + close_pad + '}';
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string DumpJson(const Json& j, int indent) {
  std::string out;
  DumpJsonTo(j, indent, 0, out);
  return out + "\n";
}

std::string ReadTextFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Json ReadJsonFile(const fs::path& path) {
  const std::string text = ReadTextFile(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

Json ResolveFileRef(const Json& spec, const fs::path& base_dir) {
  if (spec.is_object() && spec.size() == 1 && spec.contains("file")) {
    fs::path p = spec.at("file").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    return ReadJsonFile(p);
  }
  return spec;
}

namespace {

FiniteSpace ParseSpace(const Json& j, const std::string& prefix) {
  if (j.is_number_unsigned()) return FiniteSpace::Named(prefix, j.get<size_t>());
  if (!j.is_array()) throw ConfigError("space must be a count or an array");
  std::vector<SpaceItem> items;
  for (const auto& item : j) {
    if (item.is_string()) {
      items.push_back({item.get<std::string>(), std::nullopt});
    } else if (item.is_object()) {
      SpaceItem s{JsonGet<std::string>(item, "id"), std::nullopt};
      if (item.contains("tokens")) s.tokens = JsonGet<Tokens>(item, "tokens");
      items.push_back(std::move(s));
    } else {
      throw ConfigError("space items must be strings or {id, tokens}");
    }
  }
  try {
    return FiniteSpace(std::move(items));
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

Json SpaceToJson(const FiniteSpace& space) {
  Json arr = Json::array();
  for (const auto& item : space.items()) {
    if (item.tokens) {
      arr.push_back({{"id", item.id}, {"tokens", *item.tokens}});
    } else {
      arr.push_back(item.id);
    }
  }
  return arr;
}

EditMetric ParseMetric(const Json& j) {
  const auto name = JsonGet<std::string>(j, "kind");
  const auto kind = ParseMetricKind(name);
  if (!kind) throw ConfigError("unknown metric kind '" + name + "'");
  switch (*kind) {
    case MetricKind::kIndicator:
      return EditMetric::Indicator(JsonGetOr<double>(j, "delta", 1.0));
    case MetricKind::kWeightedIndicator:
      return EditMetric::WeightedIndicator(JsonGet<Table>(j, "weights"));
    case MetricKind::kLevenshteinRaw:
      return EditMetric::LevenshteinRaw(JsonGet<double>(j, "c_max"));
    case MetricKind::kLevenshteinNormalized:
      return EditMetric::LevenshteinNormalized(JsonGetOr<double>(j, "c_max", 1.0));
  }
  throw InvariantViolation("unhandled metric kind");
}

Json MetricToJson(const EditMetric& m) {
  Json j = {{"kind", MetricKindName(m.kind)}, {"c_max", m.c_max}};
  if (m.kind == MetricKind::kIndicator) j["delta"] = m.delta;
  if (m.kind == MetricKind::kWeightedIndicator) j["weights"] = m.weights;
  return j;
}

Environment ParseEnvironmentUnchecked(const Json& spec) {
  if (!spec.is_object()) throw ConfigError("environment must be an object");
  const Json user_spec = JsonGetOr<Json>(spec, "user", Json::object());
  const auto kind = JsonGetOr<std::string>(user_spec, "kind", "table");
  const double weaken_w = JsonGetOr<double>(user_spec, "weaken_w", 0.0);

  auto finish = [&](Environment env) {
    return weaken_w == 0.0 ? std::move(env) : WeakenEnvironment(env, weaken_w);
  };

  if (kind == "example1") {
    return finish(BuildExample1(JsonGet<size_t>(user_spec, "N"),
                                JsonGet<double>(user_spec, "gamma_min"),
                                JsonGetOr<double>(user_spec, "delta", 1.0)));
  }

  ContextSpace contexts(ParseSpace(spec.at("contexts"), "x"));
  ResponseSpace responses(ParseSpace(spec.at("responses"), "y"));
  const size_t nx = contexts.size();
  const size_t ny = responses.size();
  Distribution rho = spec.contains("rho")
                         ? Distribution(JsonGet<std::vector<double>>(spec, "rho"))
                         : Distribution::Uniform(nx);
  Policy pi_ref = spec.contains("pi_ref") ? Policy(JsonGet<Table>(spec, "pi_ref"))
                                          : Policy::Uniform(nx, ny);

  if (kind == "gibbs") {
    const double beta =
        user_spec.contains("beta") ? JsonGet<double>(user_spec, "beta")
                                   : JsonGet<double>(spec, "beta");
    EnvironmentSkeleton skel{contexts, responses, rho, pi_ref};
    return finish(BuildGibbsEnvironment(skel, JsonGet<Table>(user_spec, "cost"),
                                        beta, JsonGetOr<double>(user_spec, "w", 0.0)));
  }

  UserEditModel user;
  if (kind == "identity") {
    user = UserEditModel::Identity(nx, ny);
  } else if (kind == "table") {
    const auto raw =
        JsonGet<std::vector<std::vector<std::vector<double>>>>(user_spec, "table");
    UserEditModel::Rows rows;
    for (const auto& ctx : raw) {
      rows.emplace_back();
      for (const auto& r : ctx) rows.back().emplace_back(r);
    }
    if (user_spec.contains("gamma_floor")) {
      user = UserEditModel(
          std::move(rows), JsonGet<std::vector<double>>(user_spec, "gamma_floor"),
          JsonGet<std::vector<size_t>>(user_spec, "optimal_response"));
    } else {
      user = UserEditModel::Certify(std::move(rows));
    }
  } else {
    throw ConfigError("unknown user kind '" + kind + "'");
  }
  if (!spec.contains("metric")) throw ConfigError("missing key 'metric'");
  return finish(Environment(std::move(contexts), std::move(responses),
                            std::move(rho), std::move(pi_ref), std::move(user),
                            ParseMetric(spec.at("metric")),
                            JsonGet<double>(spec, "beta")));
}

}  // namespace

Environment ParseEnvironment(const Json& spec, const fs::path& base_dir) {
  const Json resolved = ResolveFileRef(spec, base_dir);
  try {
    return ParseEnvironmentUnchecked(resolved);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  }
}

Json PolicyToJson(const Policy& pi) { return pi.ToTable(); }

Policy PolicyFromJson(const Json& j) {
  try {
    return Policy(j.get<Table>());
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("policy table: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("policy table: ") + e.what());
  }
}

Json EnvironmentToJson(const Environment& env) {
  Json user_table = Json::array();
  for (const auto& ctx : env.user().table()) {
    Json rows = Json::array();
    for (const auto& r : ctx) rows.push_back(r.vec());
    user_table.push_back(std::move(rows));
  }
  return {
      {"contexts", SpaceToJson(env.contexts())},
      {"responses", SpaceToJson(env.responses())},
      {"rho", env.rho().vec()},
      {"pi_ref", PolicyToJson(env.pi_ref())},
      {"beta", env.beta()},
      {"metric", MetricToJson(env.metric())},
      {"user",
       {{"kind", "table"},
        {"table", std::move(user_table)},
        {"gamma_floor", env.user().gamma_floors()},
        {"optimal_response", env.user().optimal_responses()}}},
  };
}

std::string SerializePolicyFile(const PolicyFile& file,
                                const Environment& env) {
  Json j = {{"meta", file.meta},
            {"contexts", SpaceToJson(env.contexts())},
            {"responses", SpaceToJson(env.responses())},
            {"table", PolicyToJson(file.policy)}};
  return DumpJson(j);
}

PolicyFile ParsePolicyFile(const std::string& text, const Environment& env) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("policy file: ") + e.what());
  }
  PolicyFile file;
  file.meta = JsonGetOr<Json>(j, "meta", Json::object());
  file.policy = PolicyFromJson(j.at("table"));
  if (file.policy.num_contexts() != env.num_contexts() ||
      file.policy.num_responses() != env.num_responses()) {
    throw ConfigError("policy file does not match the environment's spaces");
  }
  return file;
}

std::string SerializeDataset(const EditDataset& data) {
  std::string out = "x,y,y_edit,cost\n";
  for (const auto& r : data.records) {
    out += std::to_string(r.x) + "," + std::to_string(r.y) + "," +
           std::to_string(r.y_edit) + "," + FormatDouble(r.cost) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

template <typename Fn>
void ForEachDataLine(const std::string& text, const std::string& header,
                     Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      (line.empty() ? line : line.substr(0, line.find_last_not_of('\r') + 1)) !=
          header) {
    throw ConfigError("expected CSV header '" + header + "'");
  }
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      fn(SplitCsvLine(line));
    } catch (const std::exception& e) {
      throw ConfigError("CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

EditDataset ParseDataset(const std::string& text) {
  EditDataset data;
  ForEachDataLine(text, "x,y,y_edit,cost", [&](const auto& f) {
    if (f.size() != 4) throw ConfigError("expected 4 fields");
    data.records.push_back({std::stoul(f[0]), std::stoul(f[1]),
                            std::stoul(f[2]), std::stod(f[3])});
  });
  return data;
}

std::string SerializeRunRecord(const RunRecord& run, bool with_header) {
  std::string out;
  if (with_header) out = std::string(kRunCsvHeader) + "\n";
  for (const auto& r : run.rounds) {
    out += std::to_string(r.t) + "," + r.method + "," + std::to_string(r.arm) +
           "," + FormatDouble(r.cost) + "," + FormatDouble(r.cum_cost) + "," +
           FormatDouble(r.subopt) + "," + FormatDouble(r.cum_regret) + "\n";
  }
  return out;
}

std::vector<RoundRecord> ParseRunCsv(const std::string& text) {
  std::vector<RoundRecord> rows;
  ForEachDataLine(text, kRunCsvHeader, [&](const auto& f) {
    if (f.size() != 7) throw ConfigError("expected 7 fields");
    RoundRecord r;
    r.t = std::stoul(f[0]);
    r.method = f[1];
    r.arm = std::stoi(f[2]);
    r.cost = std::stod(f[3]);
    r.cum_cost = std::stod(f[4]);
    r.subopt = std::stod(f[5]);
    r.cum_regret = std::stod(f[6]);
    rows.push_back(std::move(r));
  });
  return rows;
}

}  // namespace editlab
