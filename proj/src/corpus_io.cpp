#include <fstream>

#include <json.hpp>

#include "acseq/checkpoint.hpp"
#include "acseq/errors.hpp"
#include "acseq/synth.hpp"

namespace acseq::data {

std::string record_to_json_line(const CaptionRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["context"] = r.context;
  j["refs"] = r.refs;
  return j.dump();
}

CaptionRecord record_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    CaptionRecord r;
    r.id = j.at("id").get<std::string>();
    if (j.contains("context")) r.context = j.at("context").get<std::vector<double>>();
    r.refs = j.at("refs").get<std::vector<std::vector<std::string>>>();
    if (r.refs.empty()) throw InvalidArgument("record " + r.id + " has no references");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed corpus record: ") + e.what());
  }
}

std::string corpus_to_jsonl(const std::vector<CaptionRecord>& corpus) {
  std::string out;
  for (const auto& r : corpus) {
    out += record_to_json_line(r);
    out.push_back('\n');
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CaptionRecord>& corpus) {
  core::write_file_atomic(path, corpus_to_jsonl(corpus));
}

std::vector<CaptionRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read corpus " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json_line(line));
    const std::size_t d = out.back().context.size();
    if (out.size() == 1) {
      dim = d;
    } else if (d != dim) {
      throw InvalidArgument("context dimension differs in record " + out.back().id);
    }
  }
  return out;
}

}  // namespace acseq::data
