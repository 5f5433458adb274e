#pragma once

// JSONL task files, one task per line:
//   {"inputs":[...],"outputs":[...],"program":"<canonical text>"}
// "program" is optional (evaluation-only data).

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lp/dsl_text.hpp"
#include "lp/error.hpp"
#include "lp/task.hpp"

namespace lp {

inline nlohmann::ordered_json task_to_json(const Task& task) {
  nlohmann::ordered_json j;
  j["inputs"] = task.inputs;
  j["outputs"] = task.outputs;
  if (task.program) j["program"] = dsl::render_program(*task.program);
  return j;
}

// Throws FormatError(line) with the given line number on any schema problem,
// DialectError for a program outside the requested dialect.
inline Task task_from_json(const nlohmann::json& j, std::size_t line, dsl::DialectConfig cfg = {}) {
  try {
    if (!j.is_object()) throw FormatError(line, "expected a JSON object");
    Task task;
    task.inputs = j.at("inputs").get<std::vector<std::string>>();
    task.outputs = j.at("outputs").get<std::vector<std::string>>();
    if (task.inputs.size() != task.outputs.size() || task.inputs.empty()) {
      throw FormatError(line, "inputs/outputs must be nonempty and equally long");
    }
    if (j.contains("program") && !j.at("program").is_null()) {
      task.program = dsl::parse_program(j.at("program").get<std::string>(), cfg);
    }
    return task;
  } catch (const FormatError&) {
    throw;
  } catch (const DialectError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(line, e.what());
  }
}

inline Task parse_task_line(const std::string& text, std::size_t line, dsl::DialectConfig cfg = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(line, e.what());
  }
  return task_from_json(j, line, cfg);
}

inline void write_dataset(const std::vector<Task>& tasks, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& t : tasks) out << task_to_json(t).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Task> read_dataset(const std::string& path, dsl::DialectConfig cfg = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Task> tasks;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    tasks.push_back(parse_task_line(text, line, cfg));
  }
  return tasks;
}

}  // namespace lp
