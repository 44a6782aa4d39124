#include "mca/chair.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"
#include "mca/errors.hpp"

namespace mca {

std::string normalize_object_name(const std::string& name) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto b = std::find_if_not(name.begin(), name.end(), is_space);
  auto e = std::find_if_not(name.rbegin(), name.rend(), is_space).base();
  std::string out = b < e ? std::string(b, e) : std::string();
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  if (out.empty()) throw InvalidArgument("object names must be nonempty");
  return out;
}

CaptionAnnotation CaptionAnnotation::make(const std::vector<std::string>& mentioned,
                                          const std::vector<std::string>& ground_truth) {
  CaptionAnnotation a;
  for (const auto& m : mentioned) a.mentioned.insert(normalize_object_name(m));
  for (const auto& g : ground_truth) a.ground_truth.insert(normalize_object_name(g));
  return a;
}

std::size_t CaptionAnnotation::hallucinated_count() const {
  return static_cast<std::size_t>(std::count_if(mentioned.begin(), mentioned.end(),
                                                [&](const std::string& m) { return !ground_truth.contains(m); }));
}

double chair_object_ratio(std::span<const CaptionAnnotation> batch) {
  std::size_t hallucinated = 0;
  std::size_t mentioned = 0;
  for (const auto& a : batch) {
    hallucinated += a.hallucinated_count();
    mentioned += a.mentioned.size();
  }
  if (mentioned == 0) throw UndefinedRatioError("object ratio is undefined with no mentioned objects");
  return static_cast<double>(hallucinated) / static_cast<double>(mentioned);
}

double chair_caption_ratio(std::span<const CaptionAnnotation> batch) {
  if (batch.empty()) throw UndefinedRatioError("caption ratio is undefined for an empty batch");
  const auto bad = std::count_if(batch.begin(), batch.end(),
                                 [](const CaptionAnnotation& a) { return a.hallucinated_count() > 0; });
  return static_cast<double>(bad) / static_cast<double>(batch.size());
}

std::vector<CaptionAnnotation> read_chair_jsonl(std::istream& in) {
  std::vector<CaptionAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; })) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("mentioned") || !j.contains("ground_truth")) {
        throw ParseError(line_no, "expected an object with \"mentioned\" and \"ground_truth\"");
      }
      out.push_back(CaptionAnnotation::make(j.at("mentioned").get<std::vector<std::string>>(),
                                            j.at("ground_truth").get<std::vector<std::string>>()));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace mca
