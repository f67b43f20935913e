#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/raster.hpp"

namespace icevit {

// Ordered class list plus the SIGRID-3 stage-of-development (SA) code table
// that maps raster codes onto class indices.
struct ClassTaxonomy {
  std::vector<std::string> class_names;
  std::map<int, int> code_to_class;

  int num_classes() const { return static_cast<int>(class_names.size()); }

  // 255 and unmapped codes are Invalid, which is a value, not an error.
  std::optional<int> map_code(int code) const {
    if (code == kInvalidSaCode) return std::nullopt;
    auto it = code_to_class.find(code);
    if (it == code_to_class.end()) return std::nullopt;
    return it->second;
  }

  int class_index(const std::string& name) const {
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw InputError("taxonomy has no class named '" + name + "'");
    return static_cast<int>(it - class_names.begin());
  }
};

// One `code,class_name` pair per line, `#` comments. Class indices follow
// first appearance order of class names.
inline ClassTaxonomy parse_taxonomy(const std::string& text) {
  ClassTaxonomy tax;
  std::map<std::string, int> name_index;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r\n";
    size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    size_t b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    size_t comma = stripped.find(',');
    if (comma == std::string::npos)
      throw FormatError("taxonomy line " + std::to_string(line_no) + ": expected 'code,class_name'");
    std::string code_str = trim(stripped.substr(0, comma));
    std::string name = trim(stripped.substr(comma + 1));
    if (name.empty())
      throw FormatError("taxonomy line " + std::to_string(line_no) + ": empty class name");
    int code;
    try {
      size_t pos;
      code = std::stoi(code_str, &pos);
      if (pos != code_str.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw FormatError("taxonomy line " + std::to_string(line_no) + ": bad SA code '" + code_str +
                        "'");
    }
    if (code < 0 || code > 254)
      throw FormatError("taxonomy line " + std::to_string(line_no) +
                        ": SA code must be in [0,254]; 255 is the reserved invalid sentinel");
    if (tax.code_to_class.count(code))
      throw FormatError("taxonomy line " + std::to_string(line_no) + ": SA code " +
                        std::to_string(code) + " mapped twice");
    auto it = name_index.find(name);
    int idx;
    if (it == name_index.end()) {
      idx = static_cast<int>(tax.class_names.size());
      tax.class_names.push_back(name);
      name_index[name] = idx;
    } else {
      idx = it->second;
    }
    tax.code_to_class[code] = idx;
  }
  if (tax.class_names.empty()) throw FormatError("taxonomy: no code mappings found");
  return tax;
}

inline ClassTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open taxonomy file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_taxonomy(buf.str());
}

inline std::string taxonomy_to_text(const ClassTaxonomy& tax) {
  std::ostringstream os;
  for (const auto& [code, idx] : tax.code_to_class)
    os << code << "," << tax.class_names[idx] << "\n";
  return os.str();
}

// Default SA-code table over the SIGRID-3 stage-of-development ranges. Old
// and multi-year ice are merged into one class; edit the shipped text table
// to change the mapping (e.g. to split second-year/multi-year ice out).
inline const char* default_taxonomy_text() {
  return "# SIGRID-3 stage-of-development (SA) code -> class name\n"
         "# 255 is reserved for invalid/land/unlabeled pixels.\n"
         "0,Water\n"
         "80,New Ice\n"
         "81,New Ice\n"
         "82,Young Ice\n"
         "83,Young Ice\n"
         "84,Young Ice\n"
         "85,First-Year Ice\n"
         "86,First-Year Ice\n"
         "87,First-Year Ice\n"
         "88,First-Year Ice\n"
         "89,First-Year Ice\n"
         "91,First-Year Ice\n"
         "93,Old/Multi-Year Ice\n"
         "95,Old/Multi-Year Ice\n"
         "96,Old/Multi-Year Ice\n"
         "97,Glacier Ice\n";
}

inline ClassTaxonomy default_taxonomy() { return parse_taxonomy(default_taxonomy_text()); }

}  // namespace icevit
