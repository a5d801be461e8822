#pragma once

#include <string>
#include <vector>

#include "deltarad/cohort.hpp"

namespace deltarad::testing {

/// 53-record cohort whose marginals match the published clinical table:
/// sex 15/37/1, metastases >=5 22 vs <5 31, machine 28/25, eleven primary
/// tumor categories, decision 45/8.
inline std::vector<PatientRecord> make_reference_cohort() {
    std::vector<std::pair<std::string, int>> tumors = {
        {"Lung", 23},       {"Breast", 19},
        {"Kidney", 2},      {"Colon", 2},
        {"Clivus Chordoma", 1}, {"Pineal Tumor", 1},
        {"Intraventricular Tumor", 1}, {"Metastatic Melanoma", 1},
        {"Thyroid", 1},     {"Low Grade Glioma", 1},
        {"Carcinomatous Meningitis", 1},
    };
    std::vector<std::string> tumor_labels;
    for (const auto& [name, count] : tumors)
        for (int i = 0; i < count; ++i) tumor_labels.push_back(name);

    std::vector<PatientRecord> out;
    for (int i = 0; i < 53; ++i) {
        PatientRecord r;
        r.patient_id = "P" + std::to_string(i + 1);
        r.sex = i < 15 ? Sex::Male : (i < 52 ? Sex::Female : Sex::Other);
        r.n_metastases = i < 22 ? 5 + i % 4 : 1 + i % 4;
        r.machine = i < 28 ? Machine::LINAC : Machine::GammaKnife;
        r.primary_tumor = tumor_labels[i];
        r.decision_si = i < 45 ? 1 : 0;
        r.date_first_treatment = Date{2020, 1 + i % 12, 1 + i % 28};
        Date fu = r.date_first_treatment;
        fu.year += (fu.month + 6) > 12 ? 1 : 0;
        fu.month = 1 + (fu.month + 6 - 1) % 12;
        r.date_first_followup = fu;
        r.age = 45.0 + i % 30;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace deltarad::testing
