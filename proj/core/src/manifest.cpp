#include <fstream>

#include "json.hpp"
#include "sstdunet/data.hpp"

namespace sstdunet {

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    if (!j.contains("path") || !j.contains("subject_id"))
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": entry needs path and subject_id");
    e.path = j["path"].get<std::string>();
    e.subject_id = j["subject_id"].get<std::string>();
    e.mask = j.value("mask", "");
    e.split = j.value("split", "");
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open manifest for write: " + path);
  for (const auto& e : entries) {
    nlohmann::json j{{"path", e.path}, {"subject_id", e.subject_id}};
    if (!e.mask.empty()) j["mask"] = e.mask;
    if (!e.split.empty()) j["split"] = e.split;
    os << j.dump() << '\n';
  }
}

}  // namespace sstdunet
