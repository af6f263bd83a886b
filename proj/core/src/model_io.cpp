#include "branchkit/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace branchkit {

namespace {

using nlohmann::json;

UnivariateLaw parse_cell(const json& cell, const std::string& where) {
  if (!cell.is_object() || cell.size() != 1)
    throw ParseError(where + ": cell must be a single-key object");
  const auto it = cell.begin();
  const std::string& key = it.key();
  const json& value = it.value();
  if (key == "poisson") return Poisson{value.get<double>()};
  if (key == "constant") return Constant{value.get<long long>()};
  if (key == "binomial")
    return Binomial{value.at("trials").get<long long>(), value.at("success").get<double>()};
  if (key == "geometric") return Geometric{value.at("success").get<double>()};
  throw ParseError(where + ": unknown law '" + key + "'");
}

OffspringLaw parse_law(const json& entry, int d, const std::string& where) {
  if (entry.contains("product")) {
    const auto& cells = entry.at("product");
    if (!cells.is_array())
      throw ParseError(where + ".product: expected an array of univariate laws");
    ProductForm form;
    for (std::size_t c = 0; c < cells.size(); ++c)
      form.cells.push_back(parse_cell(cells[c], where + ".product[" + std::to_string(c) + "]"));
    return form;
  }
  if (entry.contains("table")) {
    const auto& rows = entry.at("table");
    if (!rows.is_array()) throw ParseError(where + ".table: expected an array of rows");
    JointTable table;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string rw = where + ".table[" + std::to_string(r) + "]";
      const auto& row = rows[r];
      JointRow out;
      const auto& v = row.at("v");
      if (!v.is_array() || static_cast<int>(v.size()) != d)
        throw ParseError(rw + ".v: expected an offspring vector of length d");
      for (const auto& x : v) out.offspring.push_back(x.get<long long>());
      out.prob = row.at("p").get<double>();
      table.rows.push_back(std::move(out));
    }
    return table;
  }
  throw ParseError(where + ": law must contain either 'product' or 'table'");
}

}  // namespace

ModelSpec parse_model_json(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  try {
    const int d = doc.at("d").get<int>();
    const int root = doc.at("root_type").get<int>();
    const auto& laws_json = doc.at("laws");
    if (!laws_json.is_array()) throw ParseError(origin + ": 'laws' must be an array");
    std::vector<OffspringLaw> laws;
    for (std::size_t i = 0; i < laws_json.size(); ++i)
      laws.push_back(parse_law(laws_json[i], d, origin + ": laws[" + std::to_string(i) + "]"));
    if (root < 1 || root > d)
      throw ParseError(origin + ": root_type must be a 1-based type index in [1, d]");
    return ModelSpec(d, std::move(laws), root - 1);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  } catch (const ModelError& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

ModelSpec load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open model file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_json(buf.str(), path);
}

std::string model_to_json(const ModelSpec& model) {
  json doc;
  doc["d"] = model.dimension();
  doc["root_type"] = model.root_type() + 1;
  json laws = json::array();
  for (int i = 0; i < model.dimension(); ++i) {
    json entry;
    std::visit(
        [&](const auto& law) {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ProductForm>) {
            json cells = json::array();
            for (const auto& cell : law.cells) {
              json c;
              std::visit(
                  [&](const auto& l) {
                    using U = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<U, Poisson>) {
                      c["poisson"] = l.rate;
                    } else if constexpr (std::is_same_v<U, Binomial>) {
                      c["binomial"] = {{"trials", l.trials}, {"success", l.success}};
                    } else if constexpr (std::is_same_v<U, Geometric>) {
                      c["geometric"] = {{"success", l.success}};
                    } else {
                      c["constant"] = l.value;
                    }
                  },
                  cell);
              cells.push_back(std::move(c));
            }
            entry["product"] = std::move(cells);
          } else {
            json rows = json::array();
            for (const auto& row : law.rows)
              rows.push_back({{"v", row.offspring}, {"p", row.prob}});
            entry["table"] = std::move(rows);
          }
        },
        model.law(i));
    laws.push_back(std::move(entry));
  }
  doc["laws"] = std::move(laws);
  return doc.dump(2) + "\n";
}

std::string format_sig12(double v) {
  if (!std::isfinite(v))
    throw std::invalid_argument("refusing to format non-finite value in output");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string format_csv(const CsvTable& table) {
  std::ostringstream out;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out << ',';
    out << table.header[c];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw std::invalid_argument("csv row width does not match header");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      if (row[c].has_value()) out << format_sig12(*row[c]);
    }
    out << '\n';
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << contents;
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace branchkit
