#pragma once

// CHAIR hallucination ratios over annotated captions.
//
//   object ratio  = hallucinated object mentions / all object mentions
//   caption ratio = captions with any hallucinated object / all captions
//
// Mentions are counted once per caption. Names are matched exactly after
// trimming and lower-casing; there is no synonym expansion.

#include <istream>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mca {

struct CaptionAnnotation {
  std::set<std::string> mentioned;
  std::set<std::string> ground_truth;

  // Normalizes every name; throws InvalidArgument on an empty name.
  static CaptionAnnotation make(const std::vector<std::string>& mentioned,
                                const std::vector<std::string>& ground_truth);

  std::size_t hallucinated_count() const;
};

std::string normalize_object_name(const std::string& name);

double chair_object_ratio(std::span<const CaptionAnnotation> batch);
double chair_caption_ratio(std::span<const CaptionAnnotation> batch);

// One JSON object per line with "mentioned" and "ground_truth" string arrays.
// Blank lines are skipped. Throws ParseError with a 1-based line number.
std::vector<CaptionAnnotation> read_chair_jsonl(std::istream& in);

}  // namespace mca
