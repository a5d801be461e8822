#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltarad/dosimetry.hpp"

namespace deltarad {

enum class Sex { Male, Female, Other };

Sex parse_sex(const std::string& s);
std::string sex_name(Sex s);

/// Calendar date; only what ISO-8601 "YYYY-MM-DD" needs.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    static Date parse(const std::string& iso);
    /// Days since the civil epoch 1970-01-01.
    long serial_days() const;
    std::string iso() const;
    auto operator<=>(const Date&) const = default;
};

struct PatientRecord {
    std::string patient_id;
    Sex sex = Sex::Other;
    int n_metastases = 1;
    Machine machine = Machine::LINAC;
    std::string primary_tumor;
    int decision_si = 0;  // 1 = subsequent irradiation required
    Date date_first_treatment;
    std::optional<Date> date_first_followup;
    std::optional<double> age;
};

/// A row as parsed, before validation; missing/bad fields stay unset.
struct RawPatientRow {
    std::string patient_id;
    std::optional<Sex> sex;
    std::optional<int> n_metastases;
    std::optional<Machine> machine;
    std::optional<std::string> primary_tumor;
    std::optional<int> decision_si;
    std::optional<Date> date_first_treatment;
    std::optional<Date> date_first_followup;
    std::optional<double> age;
};

struct ParseIssue {
    std::string patient_id;
    std::string column;
    std::string message;
};

struct LoadResult {
    std::vector<RawPatientRow> rows;
    std::vector<ParseIssue> issues;
};

struct Exclusion {
    std::string patient_id;
    std::vector<std::string> missing_fields;
};

struct ValidationResult {
    std::vector<PatientRecord> included;
    std::vector<Exclusion> excluded;
};

struct CategoryCount {
    std::string label;
    std::size_t count = 0;
    double percent = 0.0;  // 100 * count / N, rounded to 2 decimals
};

struct CohortSummary {
    std::size_t n = 0;
    std::vector<CategoryCount> sex;
    std::vector<CategoryCount> metastases;  // ">=5" vs "<5"
    std::vector<CategoryCount> machine;
    std::vector<CategoryCount> primary_tumor;
    std::vector<CategoryCount> decision;  // "2nd Treatment" vs "Follow-Up"
};

/// Patient CSV header: patient_id, sex, n_metastases, machine,
/// primary_tumor, decision_si, date_first_treatment, date_first_followup
/// (optional), age (optional). Malformed values become issues, not drops.
LoadResult load_patients(const std::string& path);

/// Excludes records missing any required clinical field and reports each
/// excluded id with its missing fields. Running it on its own output
/// excludes nothing further.
ValidationResult validate_and_exclude(const LoadResult& loaded);

inline constexpr double kDaysPerMonth = 30.4375;
inline constexpr double kLongIntervalMonths = 18.0;

/// (days between) / 30.4375.
double followup_interval_months(const Date& t0, const Date& t1);

struct OneHotEncoding {
    std::vector<std::string> column_names;  // "field=value", fields in call order
    // per field: sorted category labels
    std::map<std::string, std::vector<std::string>> categories;

    std::vector<double> encode_row(const std::map<std::string, std::string>& field_values) const;
};

/// Fits one binary column per (field, category); categories ordered
/// lexicographically. Supported fields: sex, machine, primary_tumor.
OneHotEncoding fit_one_hot(const std::vector<PatientRecord>& records,
                           const std::vector<std::string>& fields);

std::map<std::string, std::string> categorical_fields(const PatientRecord& r);

CohortSummary summarize_cohort(const std::vector<PatientRecord>& records);

struct HistogramBin {
    double lo = 0.0, hi = 0.0;
    std::size_t count = 0;
};

/// Half-open bins [k*w, (k+1)*w); counts sum to the input size.
std::vector<HistogramBin> interval_histogram(const std::vector<double>& intervals_months,
                                             double bin_width_months);

void write_cohort_summary_csv(const CohortSummary& s, const std::string& path,
                              const std::string& preamble = "");

}  // namespace deltarad
