#ifndef ADDREG_IO_HPP
#define ADDREG_IO_HPP

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "json.hpp"

#include "addreg/model.hpp"
#include "addreg/simlab.hpp"
#include "addreg/solver.hpp"

namespace addreg {

// All artifacts go through this alias: insertion order is preserved, so a
// document serializes the same way every time it is built the same way.
using Json = nlohmann::ordered_json;

struct Table {
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

// Delimited numeric table with a header row.  The delimiter is sniffed
// from the header (comma, tab, or semicolon; otherwise runs of spaces).
// Errors name the offending file line and column.
Table read_table(const std::string& path);

// Comma-delimited writer; numbers carry 17 significant digits so a read
// back reproduces every double bit for bit.
void write_table(const std::string& path, const Table& table);

// The one number-to-text mapping used across all artifacts: %.17g with
// negative zero normalized, so equal doubles always produce equal bytes.
std::string format_double(double v);

// Deterministic serialization: fixed 2-space indent, objects in stored
// key order, arrays on one line, numbers via format_double.  Rejects
// non-finite numbers, which JSON cannot carry.
std::string dump_json(const Json& doc);
void write_json(const std::string& path, const Json& doc);
Json parse_json_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Rejects keys outside `allowed`, so config typos fail loudly instead of
// being silently ignored.
void require_keys(const Json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where);

// Class names in documents use class_spec / parse_class_spec from the model
// header ("bv1", "sob2", ...); rules and covariate laws get tokens here.
std::string rule_token(EvalRule rule);
EvalRule rule_from_token(const std::string& token);

std::string dist_token(CovariateDist dist);
CovariateDist dist_from_token(const std::string& token);

Json model_to_json(const AdditiveFit& fit);
AdditiveFit model_from_json(const Json& doc);

Json plan_to_json(const PenaltyPlan& plan);
PenaltyPlan plan_from_json(const Json& doc);

Json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& doc);

}  // namespace addreg

#endif
