#include "bpa/checklist.hpp"

namespace bpa {

int ChecklistAssessment::major_count() const {
  return int{atypical_pigment_network} + int{blue_whitish_veil} + int{atypical_vascular_pattern};
}

int ChecklistAssessment::minor_count() const {
  return int{irregular_streaks} + int{irregular_pigmentation} + int{irregular_dots_globules} +
         int{regression_structures};
}

std::array<bool, 7> ChecklistAssessment::flags() const {
  return {atypical_pigment_network, blue_whitish_veil,       atypical_vascular_pattern, irregular_streaks,
          irregular_pigmentation,   irregular_dots_globules, regression_structures};
}

ChecklistAssessment ChecklistAssessment::from_flags(const std::array<bool, 7>& f) {
  return {f[0], f[1], f[2], f[3], f[4], f[5], f[6]};
}

int total_score(const ChecklistAssessment& a) {
  return a.major_count() * ChecklistAssessment::kMajorWeight + a.minor_count() * ChecklistAssessment::kMinorWeight;
}

bool is_malignant(const ChecklistAssessment& a) { return total_score(a) >= ChecklistAssessment::kMalignancyThreshold; }

void to_json(nlohmann::json& j, const ChecklistAssessment& a) {
  j = nlohmann::json::object();
  const auto f = a.flags();
  for (size_t i = 0; i < f.size(); ++i) j[std::string(ChecklistAssessment::kFieldNames[i])] = f[i];
}

void from_json(const nlohmann::json& j, ChecklistAssessment& a) {
  std::array<bool, 7> f{};
  for (size_t i = 0; i < f.size(); ++i) f[i] = j.at(std::string(ChecklistAssessment::kFieldNames[i])).get<bool>();
  a = ChecklistAssessment::from_flags(f);
}

}  // namespace bpa
