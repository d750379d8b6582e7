#pragma once

// Interaction-log ingestion: parsing delimiter-separated logs into indexed
// per-student sequences, cleaning (first attempts, dedup, missing fields),
// and seeded student-level fold splits.

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ktrace/common.hpp"
#include "ktrace/csv.hpp"

namespace kt {

// One attempt as it appears in a source log, before indexing.
struct InteractionRecord {
    std::string student_id;
    std::string problem_id;  // empty when the dataset has no problem column
    std::string skill_id;
    int correct = 0;
    long long order = 0;
};

// Names of the source columns holding each field. `problem` may be empty for
// datasets that carry no problem information.
struct ColumnMap {
    std::string student;
    std::string problem;
    std::string skill;
    std::string correct;
    std::string order;
};

inline const std::map<std::string, ColumnMap>& column_presets() {
    static const std::map<std::string, ColumnMap> presets = {
        {"canonical", {"student_id", "problem_id", "skill_id", "correct", "order"}},
        {"ass09", {"user_id", "problem_id", "skill_id", "correct", "order_id"}},
        {"ass14", {"user_id", "", "sequence_id", "correct", "log_id"}},
        {"algebra05",
         {"Anon Student Id", "Problem Name", "KC(Default)", "Correct First Attempt", "Row"}},
    };
    return presets;
}

inline std::string preset_names() {
    std::string s;
    for (const auto& [name, _] : column_presets()) {
        if (!s.empty()) s += ", ";
        s += name;
    }
    return s;
}

inline const ColumnMap& preset(const std::string& name) {
    auto it = column_presets().find(name);
    if (it == column_presets().end()) {
        throw Error("unknown preset '" + name + "' (available: " + preset_names() + ")");
    }
    return it->second;
}

struct Dataset {
    struct Row {
        int problem = -1;  // -1 when absent
        int skill = 0;
        std::int8_t correct = 0;
        long long order = 0;
    };

    std::vector<std::string> student_ids;  // index -> source id
    std::vector<std::string> skill_ids;
    std::vector<std::string> problem_ids;
    std::vector<std::vector<Row>> students;  // grouped per student, sorted by order
    bool cleaned = false;

    int n_students() const { return static_cast<int>(student_ids.size()); }
    int n_skills() const { return static_cast<int>(skill_ids.size()); }
    int n_problems() const { return static_cast<int>(problem_ids.size()); }
    bool has_problem_info() const { return !problem_ids.empty(); }

    std::size_t n_records() const {
        std::size_t n = 0;
        for (const auto& s : students) n += s.size();
        return n;
    }
};

struct LoadStats {
    std::size_t rows_read = 0;
    std::size_t malformed_rows = 0;
    std::size_t missing_skill_rows = 0;
};

namespace detail {

inline bool parse_long(const std::string& s, long long& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) return false;
    if (v < -9e18 || v > 9e18) return false;
    out = static_cast<long long>(v);
    return true;
}

inline bool parse_binary(const std::string& s, int& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    if (v == 0.0) {
        out = 0;
    } else if (v == 1.0) {
        out = 1;
    } else {
        return false;
    }
    return true;
}

class Indexer {
public:
    int intern(const std::string& id, std::vector<std::string>& table) {
        auto [it, inserted] = index_.try_emplace(id, static_cast<int>(table.size()));
        if (inserted) table.push_back(id);
        return it->second;
    }

private:
    std::unordered_map<std::string, int> index_;
};

}  // namespace detail

// Parses a delimiter-separated log (header required, comma or tab detected
// from the header line). Rows with a missing skill are dropped; rows that
// fail to parse are skipped and counted. A missing mandatory column is fatal.
inline Dataset load_interactions(std::istream& in, const ColumnMap& cols,
                                 LoadStats* stats = nullptr) {
    csv::Reader reader(in);
    if (!reader.has_header()) throw Error("load_interactions: input has no header line");

    const int c_student = reader.column(cols.student);
    const int c_skill = reader.column(cols.skill);
    const int c_correct = reader.column(cols.correct);
    const int c_order = reader.column(cols.order);
    const int c_problem = cols.problem.empty() ? -1 : reader.column(cols.problem);
    if (c_student < 0) throw Error("load_interactions: missing column '" + cols.student + "'");
    if (c_skill < 0) throw Error("load_interactions: missing column '" + cols.skill + "'");
    if (c_correct < 0) throw Error("load_interactions: missing column '" + cols.correct + "'");
    if (c_order < 0) throw Error("load_interactions: missing column '" + cols.order + "'");
    if (!cols.problem.empty() && c_problem < 0) {
        throw Error("load_interactions: missing column '" + cols.problem + "'");
    }

    Dataset d;
    detail::Indexer students, skills, problems;
    LoadStats local;
    std::vector<std::string> row;
    const int needed = std::max({c_student, c_skill, c_correct, c_order, c_problem});

    while (reader.next(row)) {
        ++local.rows_read;
        if (static_cast<int>(row.size()) <= needed) {
            ++local.malformed_rows;
            continue;
        }
        const std::string& skill_id = row[c_skill];
        if (skill_id.empty()) {
            ++local.missing_skill_rows;
            continue;
        }
        int correct;
        long long order;
        if (row[c_student].empty() || !detail::parse_binary(row[c_correct], correct) ||
            !detail::parse_long(row[c_order], order)) {
            ++local.malformed_rows;
            continue;
        }
        Dataset::Row r;
        r.skill = skills.intern(skill_id, d.skill_ids);
        r.correct = static_cast<std::int8_t>(correct);
        r.order = order;
        if (c_problem >= 0 && !row[c_problem].empty()) {
            r.problem = problems.intern(row[c_problem], d.problem_ids);
        }
        int si = students.intern(row[c_student], d.student_ids);
        if (si == static_cast<int>(d.students.size())) d.students.emplace_back();
        d.students[si].push_back(r);
    }

    for (auto& s : d.students) {
        std::stable_sort(s.begin(), s.end(),
                         [](const Dataset::Row& a, const Dataset::Row& b) { return a.order < b.order; });
    }
    if (stats) *stats = local;
    return d;
}

inline Dataset load_interactions_file(const std::string& path, const ColumnMap& cols,
                                      LoadStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return load_interactions(in, cols, stats);
}

struct CleanStats {
    std::size_t repeat_attempts = 0;
    std::size_t duplicates = 0;
    std::size_t missing_problem = 0;
};

// Keeps only the first attempt per (student, problem), removes exact
// duplicate rows, and removes records without a problem id when the dataset
// carries problem information. Identifier tables are rebuilt from the
// surviving records and orders renumbered 1..n per student.
inline Dataset clean(const Dataset& raw, CleanStats* stats = nullptr) {
    Dataset out;
    out.cleaned = true;
    detail::Indexer students, skills, problems;
    CleanStats local;

    for (int si = 0; si < raw.n_students(); ++si) {
        const auto& rows = raw.students[si];
        std::vector<Dataset::Row> kept;
        std::unordered_set<int> seen_problems;
        std::set<std::tuple<int, int, int, long long>> seen_rows;
        for (const auto& r : rows) {
            if (!seen_rows.emplace(r.problem, r.skill, r.correct, r.order).second) {
                ++local.duplicates;
                continue;
            }
            if (raw.has_problem_info()) {
                if (r.problem < 0) {
                    ++local.missing_problem;
                    continue;
                }
                if (!seen_problems.insert(r.problem).second) {
                    ++local.repeat_attempts;
                    continue;
                }
            }
            kept.push_back(r);
        }
        if (kept.empty()) continue;
        int new_si = students.intern(raw.student_ids[si], out.student_ids);
        if (new_si == static_cast<int>(out.students.size())) out.students.emplace_back();
        auto& dst = out.students[new_si];
        for (auto r : kept) {
            r.skill = skills.intern(raw.skill_ids[r.skill], out.skill_ids);
            if (r.problem >= 0) r.problem = problems.intern(raw.problem_ids[r.problem], out.problem_ids);
            r.order = static_cast<long long>(dst.size()) + 1;
            dst.push_back(r);
        }
    }
    if (stats) *stats = local;
    return out;
}

struct FoldSplit {
    int fold_id = 0;
    std::vector<int> train_students;
    std::vector<int> test_students;
};

// Student-level k-fold split, deterministic given the seed. Every student
// appears in exactly one test fold.
inline std::vector<FoldSplit> split_folds(const Dataset& data, int k = 5,
                                          std::uint64_t seed = 42) {
    if (k < 2) throw Error("split_folds: k must be >= 2");
    const int n = data.n_students();
    if (n < k) throw Error("split_folds: fewer students than folds");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const int base = n / k;
    const int rem = n % k;
    std::vector<FoldSplit> folds(k);
    int pos = 0;
    for (int f = 0; f < k; ++f) {
        const int size = base + (f < rem ? 1 : 0);
        folds[f].fold_id = f;
        folds[f].test_students.assign(order.begin() + pos, order.begin() + pos + size);
        pos += size;
    }
    for (int f = 0; f < k; ++f) {
        auto& fold = folds[f];
        std::sort(fold.test_students.begin(), fold.test_students.end());
        std::unordered_set<int> test(fold.test_students.begin(), fold.test_students.end());
        fold.train_students.reserve(n - fold.test_students.size());
        for (int i = 0; i < n; ++i) {
            if (!test.count(i)) fold.train_students.push_back(i);
        }
    }
    return folds;
}

// Canonical serialization: fixed columns, comma-separated.
inline void save_canonical(const Dataset& d, std::ostream& os) {
    csv::write_row(os, {"student_id", "problem_id", "skill_id", "correct", "order"});
    for (int si = 0; si < d.n_students(); ++si) {
        for (const auto& r : d.students[si]) {
            csv::write_row(os, {d.student_ids[si],
                                r.problem >= 0 ? d.problem_ids[r.problem] : std::string(),
                                d.skill_ids[r.skill], r.correct ? "1" : "0",
                                std::to_string(r.order)});
        }
    }
}

inline Dataset load_canonical(std::istream& in, LoadStats* stats = nullptr) {
    return load_interactions(in, preset("canonical"), stats);
}

}  // namespace kt
