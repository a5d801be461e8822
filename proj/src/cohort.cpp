#include "deltarad/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "deltarad/csvio.hpp"

namespace deltarad {

Sex parse_sex(const std::string& s) {
    if (s == "Male") return Sex::Male;
    if (s == "Female") return Sex::Female;
    if (s == "Other") return Sex::Other;
    throw std::invalid_argument("unknown sex: \"" + s + "\" (expected Male, Female or Other)");
}

std::string sex_name(Sex s) {
    switch (s) {
        case Sex::Male: return "Male";
        case Sex::Female: return "Female";
        default: return "Other";
    }
}

Date Date::parse(const std::string& iso) {
    Date d;
    char dash1 = 0, dash2 = 0;
    if (std::sscanf(iso.c_str(), "%d%c%d%c%d", &d.year, &dash1, &d.month, &dash2, &d.day) != 5 ||
        dash1 != '-' || dash2 != '-')
        throw std::invalid_argument("not an ISO-8601 date: \"" + iso + "\"");
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31)
        throw std::invalid_argument("date out of range: \"" + iso + "\"");
    return d;
}

long Date::serial_days() const {
    // Howard Hinnant's days-from-civil
    const int y = year - (month <= 2 ? 1 : 0);
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

LoadResult load_patients(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    const int c_pid = t.require_column("patient_id");
    const int c_sex = t.require_column("sex");
    const int c_nmet = t.require_column("n_metastases");
    const int c_machine = t.require_column("machine");
    const int c_tumor = t.require_column("primary_tumor");
    const int c_si = t.require_column("decision_si");
    const int c_t0 = t.require_column("date_first_treatment");
    const int c_t1 = t.column("date_first_followup");
    const int c_age = t.column("age");

    LoadResult out;
    std::set<std::string> seen_ids;
    for (const auto& row : t.rows) {
        RawPatientRow r;
        r.patient_id = row[c_pid];
        if (r.patient_id.empty()) {
            out.issues.push_back({"", "patient_id", "empty patient id"});
        } else if (!seen_ids.insert(r.patient_id).second) {
            out.issues.push_back({r.patient_id, "patient_id",
                                  "duplicate patient id " + r.patient_id});
        }

        auto issue = [&](const std::string& column, const std::string& what) {
            out.issues.push_back({r.patient_id, column, what});
        };
        auto cell = [&](int col) -> std::string {
            return col >= 0 && col < static_cast<int>(row.size()) ? row[col] : "";
        };

        if (const std::string s = cell(c_sex); !s.empty()) {
            try {
                r.sex = parse_sex(s);
            } catch (const std::exception& e) {
                issue("sex", e.what());
            }
        }
        if (const std::string s = cell(c_nmet); !s.empty()) {
            try {
                const int n = std::stoi(s);
                if (n < 1) throw std::invalid_argument("must be >= 1");
                r.n_metastases = n;
            } catch (const std::exception&) {
                issue("n_metastases", "not a positive integer: \"" + s + "\"");
            }
        }
        if (const std::string s = cell(c_machine); !s.empty()) {
            try {
                r.machine = parse_machine(s);
            } catch (const std::exception& e) {
                issue("machine", e.what());
            }
        }
        if (const std::string s = cell(c_tumor); !s.empty()) r.primary_tumor = s;
        if (const std::string s = cell(c_si); !s.empty()) {
            if (s == "0" || s == "1") r.decision_si = s == "1" ? 1 : 0;
            else issue("decision_si", "must be 0 or 1, got \"" + s + "\"");
        }
        if (const std::string s = cell(c_t0); !s.empty()) {
            try {
                r.date_first_treatment = Date::parse(s);
            } catch (const std::exception& e) {
                issue("date_first_treatment", e.what());
            }
        }
        if (const std::string s = cell(c_t1); !s.empty()) {
            try {
                r.date_first_followup = Date::parse(s);
            } catch (const std::exception& e) {
                issue("date_first_followup", e.what());
            }
        }
        if (const std::string s = cell(c_age); !s.empty()) {
            try {
                r.age = std::stod(s);
            } catch (const std::exception&) {
                issue("age", "not a number: \"" + s + "\"");
            }
        }
        out.rows.push_back(std::move(r));
    }
    return out;
}

ValidationResult validate_and_exclude(const LoadResult& loaded) {
    ValidationResult out;
    for (const auto& r : loaded.rows) {
        std::vector<std::string> missing;
        if (r.patient_id.empty()) missing.push_back("patient_id");
        if (!r.sex) missing.push_back("sex");
        if (!r.n_metastases) missing.push_back("n_metastases");
        if (!r.machine) missing.push_back("machine");
        if (!r.primary_tumor) missing.push_back("primary_tumor");
        if (!r.decision_si) missing.push_back("decision_si");
        if (!r.date_first_treatment) missing.push_back("date_first_treatment");
        if (r.date_first_followup && r.date_first_treatment &&
            *r.date_first_followup < *r.date_first_treatment)
            missing.push_back("date_first_followup (before treatment)");

        if (!missing.empty()) {
            out.excluded.push_back({r.patient_id, std::move(missing)});
            continue;
        }
        PatientRecord p;
        p.patient_id = r.patient_id;
        p.sex = *r.sex;
        p.n_metastases = *r.n_metastases;
        p.machine = *r.machine;
        p.primary_tumor = *r.primary_tumor;
        p.decision_si = *r.decision_si;
        p.date_first_treatment = *r.date_first_treatment;
        p.date_first_followup = r.date_first_followup;
        p.age = r.age;
        out.included.push_back(std::move(p));
    }
    return out;
}

double followup_interval_months(const Date& t0, const Date& t1) {
    if (t1 < t0)
        throw std::invalid_argument("followup_interval_months: follow-up precedes treatment");
    return static_cast<double>(t1.serial_days() - t0.serial_days()) / kDaysPerMonth;
}

std::vector<double> OneHotEncoding::encode_row(
    const std::map<std::string, std::string>& field_values) const {
    std::vector<double> out;
    out.reserve(column_names.size());
    for (const auto& [field, cats] : categories) {
        const auto it = field_values.find(field);
        if (it == field_values.end())
            throw std::invalid_argument("one-hot: record has no field \"" + field + "\"");
        const auto pos = std::find(cats.begin(), cats.end(), it->second);
        if (pos == cats.end())
            throw std::invalid_argument("one-hot: unseen category \"" + it->second +
                                        "\" for field \"" + field + "\"");
        for (const auto& c : cats) out.push_back(c == it->second ? 1.0 : 0.0);
    }
    return out;
}

std::map<std::string, std::string> categorical_fields(const PatientRecord& r) {
    return {{"sex", sex_name(r.sex)},
            {"machine", machine_name(r.machine)},
            {"primary_tumor", r.primary_tumor}};
}

OneHotEncoding fit_one_hot(const std::vector<PatientRecord>& records,
                           const std::vector<std::string>& fields) {
    OneHotEncoding enc;
    for (const auto& field : fields) {
        std::set<std::string> cats;
        for (const auto& r : records) {
            const auto fv = categorical_fields(r);
            const auto it = fv.find(field);
            if (it == fv.end())
                throw std::invalid_argument("one-hot: unknown field \"" + field + "\"");
            cats.insert(it->second);
        }
        enc.categories[field] = std::vector<std::string>(cats.begin(), cats.end());
    }
    // std::map iterates fields alphabetically; column order follows it
    for (const auto& [field, cats] : enc.categories)
        for (const auto& c : cats) enc.column_names.push_back(field + "=" + c);
    return enc;
}

namespace {

double pct(std::size_t count, std::size_t n) {
    return std::round(10000.0 * static_cast<double>(count) / static_cast<double>(n)) / 100.0;
}

std::vector<CategoryCount> count_categories(const std::vector<std::string>& labels,
                                            std::size_t n) {
    std::map<std::string, std::size_t> counts;
    for (const auto& l : labels) ++counts[l];
    std::vector<CategoryCount> out;
    for (const auto& [label, count] : counts) out.push_back({label, count, pct(count, n)});
    std::sort(out.begin(), out.end(), [](const CategoryCount& a, const CategoryCount& b) {
        return a.count != b.count ? a.count > b.count : a.label < b.label;
    });
    return out;
}

}  // namespace

CohortSummary summarize_cohort(const std::vector<PatientRecord>& records) {
    if (records.empty()) throw std::invalid_argument("summarize_cohort: empty cohort");
    CohortSummary s;
    s.n = records.size();
    std::vector<std::string> sex, met, machine, tumor, decision;
    for (const auto& r : records) {
        sex.push_back(sex_name(r.sex));
        met.push_back(r.n_metastases >= 5 ? ">=5" : "<5");
        machine.push_back(machine_name(r.machine));
        tumor.push_back(r.primary_tumor);
        decision.push_back(r.decision_si == 1 ? "2nd Treatment" : "Follow-Up");
    }
    s.sex = count_categories(sex, s.n);
    s.metastases = count_categories(met, s.n);
    s.machine = count_categories(machine, s.n);
    s.primary_tumor = count_categories(tumor, s.n);
    s.decision = count_categories(decision, s.n);
    return s;
}

std::vector<HistogramBin> interval_histogram(const std::vector<double>& intervals_months,
                                             double bin_width_months) {
    if (intervals_months.empty()) throw std::invalid_argument("interval_histogram: empty input");
    if (!(bin_width_months > 0.0))
        throw std::invalid_argument("interval_histogram: bin width must be > 0");
    long max_bin = 0;
    for (double v : intervals_months) {
        if (v < 0.0) throw std::invalid_argument("interval_histogram: negative interval");
        max_bin = std::max(max_bin, static_cast<long>(v / bin_width_months));
    }
    std::vector<HistogramBin> bins(static_cast<std::size_t>(max_bin) + 1);
    for (std::size_t b = 0; b < bins.size(); ++b) {
        bins[b].lo = static_cast<double>(b) * bin_width_months;
        bins[b].hi = static_cast<double>(b + 1) * bin_width_months;
    }
    for (double v : intervals_months) ++bins[static_cast<std::size_t>(v / bin_width_months)].count;
    return bins;
}

void write_cohort_summary_csv(const CohortSummary& s, const std::string& path,
                              const std::string& preamble) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write cohort summary: " + path);
    if (!preamble.empty()) os << "# " << preamble << "\n";
    os << "characteristic,category,count,percent\n";
    char buf[256];
    auto emit = [&](const std::string& section, const std::vector<CategoryCount>& counts) {
        for (const auto& c : counts) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.2f", section.c_str(),
                          csv::quote(c.label).c_str(), c.count, c.percent);
            os << buf << "\n";
        }
    };
    emit("sex", s.sex);
    emit("n_metastases", s.metastases);
    emit("machine", s.machine);
    emit("primary_tumor", s.primary_tumor);
    emit("decision", s.decision);
}

}  // namespace deltarad
