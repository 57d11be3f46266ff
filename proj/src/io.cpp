#include "concord/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace concord {

std::string format_double(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

double parse_double(const std::string& text, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("bad number '" + text + "' in " + where);
    }
    if (used != text.size()) {
        throw std::runtime_error("bad number '" + text + "' in " + where);
    }
    return v;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && !(line.size() == 1 && line[0] == '\r')) {
            lines.push_back(line);
        }
    }
    return lines;
}

}  // namespace

Dataset load_dataset_csv(const std::string& path) {
    const auto lines = read_lines(path);
    Dataset data;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const auto fields = split_csv_line(lines[ln]);
        if (ln == 0 && !fields.empty() && fields[0] == "example_id") {
            continue;   // header
        }
        if (fields.size() < 2) {
            throw std::runtime_error("line " + std::to_string(ln + 1) + " of '" + path +
                                     "' needs example_id,label");
        }
        Example x;
        x.id = fields[0];
        if (fields[1] != "0" && fields[1] != "1") {
            throw std::runtime_error("label for '" + x.id + "' in '" + path + "' is not 0/1");
        }
        for (std::size_t f = 2; f < fields.size(); ++f) {
            x.features.push_back(parse_double(fields[f], path));
        }
        data.xs.push_back(std::move(x));
        data.ys.push_back(fields[1] == "1" ? 1 : 0);
    }
    validate_dataset(data);
    return data;
}

std::vector<double> load_predictions_csv(const std::string& path, const Dataset& data) {
    const auto lines = read_lines(path);
    std::unordered_map<std::string, double> by_id;
    by_id.reserve(lines.size());
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const auto fields = split_csv_line(lines[ln]);
        if (ln == 0 && !fields.empty() && fields[0] == "example_id") {
            continue;
        }
        if (fields.size() != 2) {
            throw std::runtime_error("line " + std::to_string(ln + 1) + " of '" + path +
                                     "' needs example_id,prediction");
        }
        const double v = parse_double(fields[1], path);
        if (v < 0.0 || v > 1.0) {
            throw std::runtime_error("prediction for '" + fields[0] + "' in '" + path +
                                     "' is outside [0,1]");
        }
        if (!by_id.emplace(fields[0], v).second) {
            throw std::runtime_error("duplicate id '" + fields[0] + "' in '" + path + "'");
        }
    }
    std::vector<double> values;
    values.reserve(data.n());
    for (const auto& x : data.xs) {
        const auto it = by_id.find(x.id);
        if (it == by_id.end()) {
            throw std::runtime_error("'" + path + "' has no prediction for id '" + x.id + "'");
        }
        values.push_back(it->second);
    }
    if (by_id.size() != data.n()) {
        std::unordered_set<std::string> known;
        known.reserve(data.n());
        for (const auto& x : data.xs) {
            known.insert(x.id);
        }
        for (const auto& [id, v] : by_id) {
            if (!known.count(id)) {
                throw std::runtime_error("'" + path + "' predicts unknown id '" + id + "'");
            }
        }
    }
    return values;
}

void write_predictions_csv(const std::string& path, const Dataset& data,
                           const std::vector<double>& values) {
    if (values.size() != data.n()) {
        throw std::invalid_argument("predictions are misaligned with the dataset");
    }
    std::string out = "example_id,prediction\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        out += data.xs[i].id + "," + format_double(values[i]) + "\n";
    }
    atomic_write_file(path, out);
}

void write_rounds_csv(const std::string& path, const Transcript& transcript) {
    std::string out = "t,model,direction,k,mass,v_star,v_model,brier_drop\n";
    for (const UpdateRecord& rec : transcript.records) {
        out += std::to_string(rec.round) + "," + std::to_string(rec.model) + "," +
               to_string(rec.direction) + "," + std::to_string(rec.delta_k) + "," +
               format_double(rec.diag.group_mass) + "," + format_double(rec.diag.v_star) + "," +
               format_double(rec.diag.v_model) + "," + format_double(rec.diag.brier_drop) + "\n";
    }
    atomic_write_file(path, out);
}

std::vector<GroupMask> load_masks(const std::string& path, const Dataset& data) {
    std::unordered_map<std::string, std::size_t> row_of;
    row_of.reserve(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        row_of[data.xs[i].id] = i;
    }
    std::vector<GroupMask> masks;
    for (const auto& line : read_lines(path)) {
        if (line == "all") {
            masks.push_back(GroupMask::all(data.n()));
            continue;
        }
        if (line == "none") {
            masks.push_back(GroupMask::none(data.n()));
            continue;
        }
        GroupMask mask = GroupMask::none(data.n());
        for (const auto& id : split_csv_line(line)) {
            const auto it = row_of.find(id);
            if (it == row_of.end()) {
                throw std::runtime_error("mask in '" + path + "' references unknown id '" + id +
                                         "'");
            }
            mask.member[it->second] = 1;
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write '" + tmp + "'");
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error("write to '" + tmp + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

BaseModel table_model(const Dataset& data, const std::vector<double>& values) {
    if (values.size() != data.n()) {
        throw std::invalid_argument("model table is misaligned with the dataset");
    }
    auto table = std::make_shared<std::unordered_map<std::string, double>>();
    table->reserve(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        (*table)[data.xs[i].id] = values[i];
    }
    return [table](const Example& x) {
        const auto it = table->find(x.id);
        if (it == table->end()) {
            throw std::invalid_argument("unknown example id '" + x.id + "'");
        }
        return it->second;
    };
}

}  // namespace concord
