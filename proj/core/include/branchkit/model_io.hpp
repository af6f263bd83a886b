#pragma once

#include <optional>
#include <string>
#include <vector>

#include "branchkit/model.hpp"

namespace branchkit {

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Model files are JSON documents:
//   {
//     "d": 2,
//     "root_type": 1,                     // 1-based
//     "laws": [
//       {"product": [{"poisson": 1.0}, {"poisson": 0.5}]},
//       {"table": [{"v": [2, 0], "p": 0.75}, {"v": [0, 0], "p": 0.25}]}
//     ]
//   }
// Univariate cells: {"poisson": rate}, {"binomial": {"trials": n, "success": p}},
// {"geometric": {"success": p}}, {"constant": c}.
ModelSpec load_model(const std::string& path);
ModelSpec parse_model_json(const std::string& text, const std::string& origin = "<string>");
std::string model_to_json(const ModelSpec& model);

// CSV emission: header row, 12 significant digits, empty cells for missing
// optionals. Non-finite values are refused with a diagnostic.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;
};

std::string format_csv(const CsvTable& table);
void write_text_file(const std::string& path, const std::string& contents);
std::string format_sig12(double v);

}  // namespace branchkit
