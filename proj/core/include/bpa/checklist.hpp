#pragma once

#include <array>
#include <nlohmann/json.hpp>
#include <string_view>

namespace bpa {

// Presence flags for the seven dermoscopic structures of the 7-point
// checklist. Major criteria weigh 2, minor criteria weigh 1.
struct ChecklistAssessment {
  // major
  bool atypical_pigment_network = false;
  bool blue_whitish_veil = false;
  bool atypical_vascular_pattern = false;
  // minor
  bool irregular_streaks = false;
  bool irregular_pigmentation = false;
  bool irregular_dots_globules = false;
  bool regression_structures = false;

  static constexpr int kMajorWeight = 2;
  static constexpr int kMinorWeight = 1;
  static constexpr int kMalignancyThreshold = 3;

  int major_count() const;
  int minor_count() const;

  // Flags in checklist order (3 major, then 4 minor).
  std::array<bool, 7> flags() const;
  static ChecklistAssessment from_flags(const std::array<bool, 7>& flags);
  static constexpr std::array<std::string_view, 7> kFieldNames = {
      "atypical_pigment_network", "blue_whitish_veil",       "atypical_vascular_pattern", "irregular_streaks",
      "irregular_pigmentation",   "irregular_dots_globules", "regression_structures"};

  bool operator==(const ChecklistAssessment&) const = default;
};

// 2 * #major + #minor, in [0, 10].
int total_score(const ChecklistAssessment& a);
// total_score >= 3.
bool is_malignant(const ChecklistAssessment& a);

void to_json(nlohmann::json& j, const ChecklistAssessment& a);
void from_json(const nlohmann::json& j, ChecklistAssessment& a);

}  // namespace bpa
