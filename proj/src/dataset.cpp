#include "tabgen/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tabgen/error.hpp"
#include "tabgen/rng.hpp"

namespace tabgen {

namespace {

// Splits one CSV record starting at `pos` in `text`.  Returns the fields and
// advances `pos` past the record's terminating newline.  Quoted fields may
// contain embedded newlines, so records cannot be split on '\n' up front.
std::vector<std::string> read_record(const std::string& text, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    while (pos < text.size()) {
        char ch = text[pos];
        if (quoted) {
            if (ch == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                } else {
                    quoted = false;
                    ++pos;
                }
            } else {
                field.push_back(ch);
                ++pos;
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
            ++pos;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            ++pos;
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            fields.push_back(std::move(field));
            return fields;
        } else {
            field.push_back(ch);
            ++pos;
        }
    }
    if (quoted) throw ValidationError("csv: unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

bool needs_quoting(const std::string& s) {
    return s.find_first_of(",\"\n\r") != std::string::npos;
}

void write_field(std::ostream& out, const std::string& s) {
    if (!needs_quoting(s)) {
        out << s;
        return;
    }
    out << '"';
    for (char ch : s) {
        if (ch == '"') out << "\"\"";
        else out << ch;
    }
    out << '"';
}

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\t')) --last;
    if (first == last) return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && std::isfinite(out);
}

// Picks a missing-value label that does not collide with existing categories.
std::string missing_label(const std::vector<std::string>& vocab) {
    std::string base = "__missing__";
    std::string label = base;
    int suffix = 2;
    auto taken = [&](const std::string& v) {
        return std::find(vocab.begin(), vocab.end(), v) != vocab.end();
    };
    while (taken(label)) label = base + std::to_string(suffix++);
    return label;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw ComputeError("failed to format double");
    return std::string(buf, ptr);
}

RawTable load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open csv file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (text.empty()) throw ValidationError("csv: empty file: " + path);

    std::size_t pos = 0;
    RawTable raw;
    raw.header = read_record(text, pos);
    if (raw.header.empty() || (raw.header.size() == 1 && raw.header[0].empty()))
        throw ValidationError("csv: empty header: " + path);

    while (pos < text.size()) {
        // Skip a trailing blank line.
        if (text[pos] == '\n' || text[pos] == '\r') {
            std::size_t look = pos;
            while (look < text.size() && (text[look] == '\n' || text[look] == '\r')) ++look;
            if (look == text.size()) break;
        }
        auto fields = read_record(text, pos);
        if (fields.size() != raw.header.size())
            throw ValidationError("csv: row " + std::to_string(raw.cells.size() + 2) +
                                  " has " + std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(raw.header.size()));
        std::vector<uint8_t> miss(fields.size(), 0);
        for (std::size_t c = 0; c < fields.size(); ++c) miss[c] = fields[c].empty();
        raw.cells.push_back(std::move(fields));
        raw.missing.push_back(std::move(miss));
    }
    if (raw.cells.empty()) throw ValidationError("csv: no data rows: " + path);
    return raw;
}

TableSchema infer_schema(const RawTable& raw, const std::vector<std::string>& numerical) {
    std::set<std::string> num_set(numerical.begin(), numerical.end());
    for (const auto& n : numerical)
        if (std::find(raw.header.begin(), raw.header.end(), n) == raw.header.end())
            throw ValidationError("numerical column '" + n + "' not found in csv header");

    TableSchema schema;
    for (std::size_t c = 0; c < raw.header.size(); ++c) {
        ColumnSpec spec;
        spec.name = raw.header[c];
        if (num_set.count(spec.name)) {
            spec.kind = ColumnKind::Numerical;
        } else {
            spec.kind = ColumnKind::Categorical;
            std::set<std::string> vocab;
            for (std::size_t r = 0; r < raw.rows(); ++r)
                if (!raw.cells[r][c].empty()) vocab.insert(raw.cells[r][c]);
            spec.categories.assign(vocab.begin(), vocab.end());
        }
        schema.columns.push_back(std::move(spec));
    }
    schema.validate(false);
    return schema;
}

Dataset encode(const RawTable& raw, const TableSchema& schema_in) {
    TableSchema schema = schema_in;
    schema.validate(false);
    if (schema.columns.size() != raw.header.size())
        throw ValidationError("schema has " + std::to_string(schema.columns.size()) +
                              " columns but csv has " + std::to_string(raw.header.size()));
    for (std::size_t c = 0; c < schema.columns.size(); ++c)
        if (schema.columns[c].name != raw.header[c])
            throw ValidationError("schema column '" + schema.columns[c].name +
                                  "' does not match csv header '" + raw.header[c] + "'");

    const std::size_t R = raw.rows();
    Dataset ds;
    ds.rows = R;

    // First pass: parse in place, record missing cells per column.
    std::vector<std::vector<double>> num_cols;
    std::vector<std::vector<int32_t>> cat_cols;
    std::vector<std::vector<std::size_t>> num_missing, cat_missing;

    for (std::size_t p = 0; p < schema.columns.size(); ++p) {
        ColumnSpec& spec = schema.columns[p];
        if (spec.kind == ColumnKind::Numerical) {
            std::vector<double> col(R, 0.0);
            std::vector<std::size_t> miss;
            for (std::size_t r = 0; r < R; ++r) {
                double v;
                if (raw.missing[r][p] || !parse_double(raw.cells[r][p], v))
                    miss.push_back(r);
                else
                    col[r] = v;
            }
            num_cols.push_back(std::move(col));
            num_missing.push_back(std::move(miss));
        } else {
            std::unordered_map<std::string, int32_t> index;
            for (std::size_t i = 0; i < spec.categories.size(); ++i)
                index[spec.categories[i]] = static_cast<int32_t>(i);
            std::vector<int32_t> col(R, 0);
            std::vector<std::size_t> miss;
            for (std::size_t r = 0; r < R; ++r) {
                if (raw.missing[r][p]) {
                    miss.push_back(r);
                    continue;
                }
                auto it = index.find(raw.cells[r][p]);
                if (it == index.end())
                    throw ValidationError("value '" + raw.cells[r][p] + "' in column '" +
                                          spec.name + "' is not in the schema vocabulary");
                col[r] = it->second;
            }
            // Missing categorical values get a dedicated label so the model
            // can generate them like any other category.
            if (!miss.empty()) {
                std::string label = missing_label(spec.categories);
                spec.categories.push_back(label);
                int32_t code = static_cast<int32_t>(spec.categories.size() - 1);
                for (std::size_t r : miss) col[r] = code;
            }
            cat_cols.push_back(std::move(col));
            cat_missing.push_back(std::move(miss));
        }
    }

    // Numerical missing values become the column mean of observed cells.
    std::size_t num_slot = 0;
    for (std::size_t p = 0; p < schema.columns.size(); ++p) {
        if (schema.columns[p].kind != ColumnKind::Numerical) continue;
        auto& col = num_cols[num_slot];
        auto& miss = num_missing[num_slot];
        if (!miss.empty()) {
            if (miss.size() == R)
                throw ValidationError("numerical column '" + schema.columns[p].name +
                                      "' has no observed values");
            std::vector<uint8_t> is_miss(R, 0);
            for (std::size_t r : miss) is_miss[r] = 1;
            double sum = 0.0;
            for (std::size_t r = 0; r < R; ++r)
                if (!is_miss[r]) sum += col[r];
            double mean = sum / static_cast<double>(R - miss.size());
            for (std::size_t r : miss) col[r] = mean;
        }
        ++num_slot;
    }

    schema.validate(true);
    ds.schema = schema;
    ds.num.resize(num_cols.size() * R);
    for (std::size_t s = 0; s < num_cols.size(); ++s)
        std::copy(num_cols[s].begin(), num_cols[s].end(), ds.num.begin() + s * R);
    ds.cat.resize(cat_cols.size() * R);
    for (std::size_t s = 0; s < cat_cols.size(); ++s)
        std::copy(cat_cols[s].begin(), cat_cols[s].end(), ds.cat.begin() + s * R);
    return ds;
}

Dataset load_dataset(const std::string& csv_path, const TableSchema& schema) {
    return encode(load_csv(csv_path), schema);
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputeError("cannot write csv file: " + path);
    const auto& cols = ds.schema.columns;
    for (std::size_t p = 0; p < cols.size(); ++p) {
        if (p) out << ',';
        write_field(out, cols[p].name);
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.rows; ++r) {
        std::size_t num_slot = 0, cat_slot = 0;
        for (std::size_t p = 0; p < cols.size(); ++p) {
            if (p) out << ',';
            if (cols[p].kind == ColumnKind::Numerical) {
                out << format_double(ds.num_at(num_slot++, r));
            } else {
                int32_t code = ds.cat_at(cat_slot, r);
                const auto& vocab = cols[p].categories;
                if (code < 0 || static_cast<std::size_t>(code) >= vocab.size())
                    throw ComputeError("categorical code out of range in column '" +
                                       cols[p].name + "'");
                write_field(out, vocab[code]);
                ++cat_slot;
            }
        }
        out << '\n';
    }
    if (!out) throw ComputeError("failed writing csv file: " + path);
}

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.schema = ds.schema;
    out.rows = idx.size();
    const std::size_t N = ds.schema.num_count();
    const std::size_t C = ds.schema.cat_count();
    out.num.resize(N * idx.size());
    out.cat.resize(C * idx.size());
    for (std::size_t s = 0; s < N; ++s)
        for (std::size_t i = 0; i < idx.size(); ++i)
            out.num[s * idx.size() + i] = ds.num_at(s, idx[i]);
    for (std::size_t s = 0; s < C; ++s)
        for (std::size_t i = 0; i < idx.size(); ++i)
            out.cat[s * idx.size() + i] = ds.cat_at(s, idx[i]);
    return out;
}

std::vector<Dataset> split(const Dataset& ds, const std::vector<double>& ratios,
                           uint64_t seed) {
    if (ratios.empty()) throw ValidationError("split: no ratios given");
    double total = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw ValidationError("split: ratios must be positive");
        total += r;
    }
    if (std::fabs(total - 1.0) > 1e-9)
        throw ValidationError("split: ratios must sum to 1");

    // Largest-remainder rounding: floor everything, then hand the leftover
    // rows to the parts with the biggest fractional remainders.
    const std::size_t R = ds.rows;
    std::vector<std::size_t> sizes(ratios.size());
    std::vector<std::pair<double, std::size_t>> rem(ratios.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        double exact = ratios[i] * static_cast<double>(R);
        sizes[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = {exact - std::floor(exact), i};
        assigned += sizes[i];
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < R; ++i, ++assigned) ++sizes[rem[i % rem.size()].second];

    std::vector<std::size_t> idx(R);
    for (std::size_t i = 0; i < R; ++i) idx[i] = i;
    Philox rng(seed, Philox::substream(streams::kSplit, 0));
    for (std::size_t i = R; i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(idx[i - 1], idx[j]);
    }

    std::vector<Dataset> parts;
    std::size_t offset = 0;
    for (std::size_t size : sizes) {
        std::vector<std::size_t> part(idx.begin() + offset, idx.begin() + offset + size);
        std::sort(part.begin(), part.end());  // original row order within each part
        parts.push_back(take_rows(ds, part));
        offset += size;
    }
    return parts;
}

}  // namespace tabgen
