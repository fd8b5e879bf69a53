#include "addreg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <system_error>
#include <utility>

namespace addreg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim != ' ') {
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(delim, start);
      if (pos == std::string::npos) {
        out.push_back(trim(line.substr(start)));
        break;
      }
      out.push_back(trim(line.substr(start, pos - start)));
      start = pos + 1;
    }
  } else {
    // whitespace mode: any run of blanks separates fields
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      std::size_t b = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
      if (i > b) out.push_back(line.substr(b, i - b));
    }
  }
  return out;
}

char sniff_delimiter(const std::string& header) {
  std::size_t best_count = 0;
  char best = ' ';
  for (char cand : {',', '\t', ';'}) {
    const std::size_t count =
        static_cast<std::size_t>(std::count(header.begin(), header.end(), cand));
    if (count > best_count) {
      best_count = count;
      best = cand;
    }
  }
  return best;
}

double parse_number(const std::string& token, std::size_t line_no,
                    const std::string& column) {
  const std::string t = trim(token);
  double value = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || t.empty()) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ", column '" +
                                column + "': not a number: '" + t + "'");
  }
  return value;
}

void json_escape(const std::string& s, std::string& out) {
  out.push_back('"');
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(c));
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
}

bool array_is_flat(const Json& arr) {
  for (const auto& v : arr) {
    if (v.is_object() || v.is_array()) return false;
  }
  return true;
}

void dump_value(const Json& v, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(depth + 1) * 2, ' ');
  switch (v.type()) {
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      std::size_t i = 0;
      for (const auto& item : v.items()) {
        out += pad_in;
        json_escape(item.key(), out);
        out += ": ";
        dump_value(item.value(), out, depth + 1);
        if (++i < v.size()) out += ",";
        out += "\n";
      }
      out += pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      if (array_is_flat(v)) {
        out += "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out += ", ";
          dump_value(v[i], out, depth);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        out += pad_in;
        dump_value(v[i], out, depth + 1);
        if (i + 1 < v.size()) out += ",";
        out += "\n";
      }
      out += pad + "]";
      return;
    }
    case Json::value_t::string:
      json_escape(v.get_ref<const std::string&>(), out);
      return;
    case Json::value_t::boolean:
      out += v.get<bool>() ? "true" : "false";
      return;
    case Json::value_t::number_integer:
      out += std::to_string(v.get<std::int64_t>());
      return;
    case Json::value_t::number_unsigned:
      out += std::to_string(v.get<std::uint64_t>());
      return;
    case Json::value_t::number_float:
      out += format_double(v.get<double>());
      return;
    case Json::value_t::null:
      out += "null";
      return;
    default:
      throw std::invalid_argument("cannot serialize this JSON node type");
  }
}

}  // namespace

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }

  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) {
    throw std::invalid_argument("'" + path + "' has no header row");
  }
  const char delim = sniff_delimiter(lines[first]);
  Table table;
  table.column_names = split_line(lines[first], delim);
  if (table.column_names.empty()) {
    throw std::invalid_argument("'" + path + "' has an empty header row");
  }
  table.columns.assign(table.column_names.size(), {});

  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const std::vector<std::string> fields = split_line(lines[li], delim);
    if (fields.size() != table.column_names.size()) {
      throw std::invalid_argument(
          "'" + path + "' line " + std::to_string(li + 1) + ": expected " +
          std::to_string(table.column_names.size()) + " fields, found " +
          std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      table.columns[c].push_back(
          parse_number(fields[c], li + 1, table.column_names[c]));
    }
  }
  if (table.rows() == 0) {
    throw std::invalid_argument("'" + path + "' has no data rows");
  }
  return table;
}

void write_table(const std::string& path, const Table& table) {
  if (table.columns.size() != table.column_names.size()) {
    throw std::invalid_argument("table columns do not match its header");
  }
  const std::size_t rows = table.rows();
  for (const auto& col : table.columns) {
    if (col.size() != rows) {
      throw std::invalid_argument("table columns have unequal lengths");
    }
  }
  std::string out;
  for (std::size_t c = 0; c < table.column_names.size(); ++c) {
    if (c) out += ",";
    out += table.column_names[c];
  }
  out += "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out += ",";
      out += format_double(table.columns[c][r]);
    }
    out += "\n";
  }
  write_text_file(path, out);
}

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument("cannot serialize a non-finite number");
  }
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dump_json(const Json& doc) {
  std::string out;
  dump_value(doc, out, 0);
  out += "\n";
  return out;
}

void write_json(const std::string& path, const Json& doc) {
  write_text_file(path, dump_json(doc));
}

Json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("'" + path + "': " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::string out((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

void require_keys(const Json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where) {
  if (!obj.is_object()) {
    throw std::invalid_argument(where + ": expected an object");
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
    }
  }
}

std::string rule_token(EvalRule rule) {
  switch (rule) {
    case EvalRule::StepRightContinuous: return "step";
    case EvalRule::PiecewiseLinear: return "linear";
    case EvalRule::NaturalSpline: return "spline";
  }
  throw std::invalid_argument("unknown evaluation rule");
}

EvalRule rule_from_token(const std::string& token) {
  if (token == "step") return EvalRule::StepRightContinuous;
  if (token == "linear") return EvalRule::PiecewiseLinear;
  if (token == "spline") return EvalRule::NaturalSpline;
  throw std::invalid_argument("unknown rule token '" + token + "'");
}

std::string dist_token(CovariateDist dist) {
  switch (dist) {
    case CovariateDist::Uniform: return "uniform";
    case CovariateDist::TiltedLinear: return "tilted";
  }
  throw std::invalid_argument("unknown covariate distribution");
}

CovariateDist dist_from_token(const std::string& token) {
  if (token == "uniform") return CovariateDist::Uniform;
  if (token == "tilted") return CovariateDist::TiltedLinear;
  throw std::invalid_argument("unknown distribution token '" + token + "'");
}

Json model_to_json(const AdditiveFit& fit) {
  Json doc;
  doc["intercept"] = fit.intercept;
  Json comps = Json::array();
  for (const auto& comp : fit.components) {
    if (!comp) {
      comps.push_back(nullptr);
      continue;
    }
    Json c;
    c["class"] = class_spec(comp->cls);
    c["rule"] = rule_token(comp->rule);
    c["knots"] = comp->knots;
    c["values"] = comp->values;
    c["multiplicities"] = comp->multiplicities;
    c["seminorm"] = comp->seminorm_value;
    c["empnorm"] = comp->empnorm_value;
    comps.push_back(std::move(c));
  }
  doc["components"] = std::move(comps);
  return doc;
}

AdditiveFit model_from_json(const Json& doc) {
  // "rescale" is a driver-level annotation (the stored min-max transform);
  // the model itself ignores it
  require_keys(doc, {"intercept", "components", "rescale"}, "model");
  AdditiveFit fit;
  fit.intercept = doc.at("intercept").get<double>();
  const Json& comps = doc.at("components");
  if (!comps.is_array()) throw std::invalid_argument("model: components must be an array");
  for (std::size_t j = 0; j < comps.size(); ++j) {
    if (comps[j].is_null()) {
      fit.components.emplace_back(std::nullopt);
      continue;
    }
    const std::string where = "model component " + std::to_string(j + 1);
    require_keys(comps[j],
                 {"class", "rule", "knots", "values", "multiplicities", "seminorm",
                  "empnorm"},
                 where);
    ComponentFit cf;
    cf.cls = parse_class_spec(comps[j].at("class").get<std::string>());
    cf.rule = rule_from_token(comps[j].at("rule").get<std::string>());
    cf.knots = comps[j].at("knots").get<std::vector<double>>();
    cf.values = comps[j].at("values").get<std::vector<double>>();
    cf.multiplicities = comps[j].at("multiplicities").get<std::vector<double>>();
    cf.seminorm_value = comps[j].at("seminorm").get<double>();
    cf.empnorm_value = comps[j].at("empnorm").get<double>();
    if (cf.knots.size() != cf.values.size() ||
        cf.knots.size() != cf.multiplicities.size() || cf.knots.empty()) {
      throw std::invalid_argument(where + ": knots, values, multiplicities disagree");
    }
    for (std::size_t i = 0; i + 1 < cf.knots.size(); ++i) {
      if (!(cf.knots[i] < cf.knots[i + 1])) {
        throw std::invalid_argument(where + ": knots must be strictly increasing");
      }
    }
    fit.components.emplace_back(std::move(cf));
  }
  return fit;
}

Json plan_to_json(const PenaltyPlan& plan) {
  Json doc;
  Json classes = Json::array();
  for (const auto& cls : plan.classes) classes.push_back(class_spec(cls));
  doc["classes"] = std::move(classes);
  doc["lambda"] = plan.lambda;
  doc["rho"] = plan.rho;
  doc["w"] = plan.w;
  doc["gamma"] = plan.gamma;
  doc["c1"] = plan.c1;
  doc["epsilon"] = plan.epsilon;
  doc["a0"] = plan.a0;
  doc["q"] = plan.q;
  doc["b0star"] = plan.b0star;
  return doc;
}

PenaltyPlan plan_from_json(const Json& doc) {
  require_keys(doc,
               {"classes", "lambda", "rho", "w", "gamma", "c1", "epsilon", "a0", "q",
                "b0star"},
               "plan");
  PenaltyPlan plan;
  for (const auto& tok : doc.at("classes")) {
    plan.classes.push_back(parse_class_spec(tok.get<std::string>()));
  }
  plan.lambda = doc.at("lambda").get<std::vector<double>>();
  plan.rho = doc.at("rho").get<std::vector<double>>();
  plan.w = doc.at("w").get<std::vector<double>>();
  plan.gamma = doc.at("gamma").get<std::vector<double>>();
  plan.c1 = doc.at("c1").get<double>();
  plan.epsilon = doc.at("epsilon").get<double>();
  plan.a0 = doc.at("a0").get<double>();
  plan.q = doc.at("q").get<double>();
  plan.b0star = doc.at("b0star").get<double>();
  plan.validate();
  return plan;
}

Json scenario_to_json(const Scenario& scenario) {
  Json doc;
  doc["n"] = scenario.n;
  doc["p"] = scenario.p;
  doc["active"] = scenario.active;
  Json shapes = Json::array();
  for (const Shape& s : scenario.shapes) {
    Json js;
    switch (s.kind) {
      case Shape::Kind::Step: js["kind"] = "step"; break;
      case Shape::Kind::PiecewiseLinear: js["kind"] = "linear"; break;
      case Shape::Kind::Sine: js["kind"] = "sine"; break;
      case Shape::Kind::CustomTable: js["kind"] = "table"; break;
    }
    js["jumps"] = s.jumps;
    js["cycles"] = s.cycles;
    js["knots"] = s.knots;
    js["values"] = s.values;
    js["rule"] = rule_token(s.rule);
    shapes.push_back(std::move(js));
  }
  doc["shapes"] = std::move(shapes);
  doc["amplitudes"] = scenario.amplitudes;
  doc["q"] = scenario.q;
  doc["noise_sd"] = scenario.noise_sd;
  doc["bounded_noise"] = scenario.bounded_noise;
  doc["covariate_dist"] = dist_token(scenario.covariate_dist);
  doc["seed"] = scenario.seed;
  return doc;
}

Scenario scenario_from_json(const Json& doc) {
  require_keys(doc,
               {"n", "p", "active", "shapes", "amplitudes", "q", "noise_sd",
                "bounded_noise", "covariate_dist", "seed"},
               "scenario");
  Scenario scenario;
  scenario.n = doc.at("n").get<std::size_t>();
  scenario.p = doc.at("p").get<std::size_t>();
  scenario.active = doc.at("active").get<std::vector<std::size_t>>();
  for (std::size_t k = 0; k < doc.at("shapes").size(); ++k) {
    const Json& js = doc.at("shapes")[k];
    const std::string where = "scenario shape " + std::to_string(k + 1);
    require_keys(js, {"kind", "jumps", "cycles", "knots", "values", "rule"}, where);
    Shape s;
    const std::string kind = js.at("kind").get<std::string>();
    if (kind == "step") {
      s.kind = Shape::Kind::Step;
    } else if (kind == "linear") {
      s.kind = Shape::Kind::PiecewiseLinear;
    } else if (kind == "sine") {
      s.kind = Shape::Kind::Sine;
    } else if (kind == "table") {
      s.kind = Shape::Kind::CustomTable;
    } else {
      throw std::invalid_argument(where + ": unknown kind '" + kind + "'");
    }
    s.jumps = js.at("jumps").get<int>();
    s.cycles = js.at("cycles").get<int>();
    s.knots = js.at("knots").get<std::vector<double>>();
    s.values = js.at("values").get<std::vector<double>>();
    s.rule = rule_from_token(js.at("rule").get<std::string>());
    scenario.shapes.push_back(std::move(s));
  }
  scenario.amplitudes = doc.at("amplitudes").get<std::vector<double>>();
  scenario.q = doc.at("q").get<double>();
  scenario.noise_sd = doc.at("noise_sd").get<double>();
  scenario.bounded_noise = doc.at("bounded_noise").get<bool>();
  scenario.covariate_dist = dist_from_token(doc.at("covariate_dist").get<std::string>());
  scenario.seed = doc.at("seed").get<std::uint64_t>();
  scenario.validate();
  return scenario;
}

}  // namespace addreg
