#include "record_writer.hpp"

#include "ebsim/errors.hpp"

#include <cmath>
#include <cstdio>

namespace ebsim::tools {

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string json_escape(const std::string& s) {
    std::string out = "\"";
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
    return out;
}

std::string scalar_csv(const Value& v);

std::string json_scalar(const Value& v) {
    switch (v.index()) {
        case 0: return std::get<bool>(v) ? "true" : "false";
        case 1: return fmt_uint(std::get<std::uint64_t>(v));
        case 2: return fmt_int(std::get<std::int64_t>(v));
        case 3: {
            const double d = std::get<double>(v);
            return std::isfinite(d) ? fmt_double(d) : "null";
        }
        case 4: return json_escape(std::get<std::string>(v));
        default: break;
    }
    throw param_error("writer: not a scalar value");
}

std::string json_value(const Value& v) {
    if (const auto* vd = std::get_if<std::vector<double>>(&v)) {
        std::string out = "[";
        for (std::size_t i = 0; i < vd->size(); ++i) {
            if (i > 0) out += ',';
            out += std::isfinite((*vd)[i]) ? fmt_double((*vd)[i]) : "null";
        }
        return out + "]";
    }
    if (const auto* vu = std::get_if<std::vector<std::uint64_t>>(&v)) {
        std::string out = "[";
        for (std::size_t i = 0; i < vu->size(); ++i) {
            if (i > 0) out += ',';
            out += fmt_uint((*vu)[i]);
        }
        return out + "]";
    }
    return json_scalar(v);
}

std::string scalar_csv(const Value& v) {
    switch (v.index()) {
        case 0: return std::get<bool>(v) ? "true" : "false";
        case 1: return fmt_uint(std::get<std::uint64_t>(v));
        case 2: return fmt_int(std::get<std::int64_t>(v));
        case 3: return fmt_double(std::get<double>(v));
        case 4: return csv_escape(std::get<std::string>(v));
        default: break;
    }
    throw param_error("writer: not a scalar value");
}

} // namespace

Format parse_format(const std::string& name) {
    if (name == "csv") return Format::Csv;
    if (name == "jsonl") return Format::Jsonl;
    throw param_error("writer: format must be csv or jsonl");
}

Record& Record::add(std::string key, bool v) {
    fields_.emplace_back(std::move(key), Value{v});
    return *this;
}
Record& Record::add(std::string key, std::uint64_t v) {
    fields_.emplace_back(std::move(key), Value{v});
    return *this;
}
Record& Record::add(std::string key, std::int64_t v) {
    fields_.emplace_back(std::move(key), Value{v});
    return *this;
}
Record& Record::add(std::string key, int v) {
    fields_.emplace_back(std::move(key), Value{static_cast<std::int64_t>(v)});
    return *this;
}
Record& Record::add(std::string key, double v) {
    fields_.emplace_back(std::move(key), Value{v});
    return *this;
}
Record& Record::add(std::string key, std::string v) {
    fields_.emplace_back(std::move(key), Value{std::move(v)});
    return *this;
}
Record& Record::add(std::string key, const char* v) {
    fields_.emplace_back(std::move(key), Value{std::string(v)});
    return *this;
}
Record& Record::add(std::string key, std::vector<double> v) {
    fields_.emplace_back(std::move(key), Value{std::move(v)});
    return *this;
}
Record& Record::add(std::string key, std::vector<std::uint64_t> v) {
    fields_.emplace_back(std::move(key), Value{std::move(v)});
    return *this;
}

RecordWriter::RecordWriter(std::ostream& out, Format format,
                           std::vector<std::pair<std::string, std::string>> config)
    : out_(out), format_(format) {
    if (format_ == Format::Csv) {
        out_ << "# config:";
        for (const auto& [k, v] : config) out_ << ' ' << k << '=' << v;
        out_ << "\nrecord,key,value\n";
    } else {
        out_ << "{\"record\":\"meta\",\"tool\":\"ebsim\",\"version\":\"1.0.0\",\"config\":{";
        for (std::size_t i = 0; i < config.size(); ++i) {
            if (i > 0) out_ << ',';
            out_ << json_escape(config[i].first) << ':' << json_escape(config[i].second);
        }
        out_ << "}}\n";
    }
}

void RecordWriter::write(const std::string& name, const Record& record) {
    const std::uint64_t seq = seq_[name]++;
    if (format_ == Format::Csv) {
        const std::string id = name + "." + fmt_uint(seq);
        for (const auto& [key, value] : record.fields()) {
            if (const auto* vd = std::get_if<std::vector<double>>(&value)) {
                for (std::size_t i = 0; i < vd->size(); ++i) {
                    out_ << id << ',' << key << '.' << i << ',' << fmt_double((*vd)[i]) << '\n';
                }
            } else if (const auto* vu = std::get_if<std::vector<std::uint64_t>>(&value)) {
                for (std::size_t i = 0; i < vu->size(); ++i) {
                    out_ << id << ',' << key << '.' << i << ',' << fmt_uint((*vu)[i]) << '\n';
                }
            } else {
                out_ << id << ',' << key << ',' << scalar_csv(value) << '\n';
            }
        }
    } else {
        out_ << "{\"record\":" << json_escape(name) << ",\"seq\":" << fmt_uint(seq);
        for (const auto& [key, value] : record.fields()) {
            out_ << ',' << json_escape(key) << ':' << json_value(value);
        }
        out_ << "}\n";
    }
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_uint(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt_int(std::int64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
    return buf;
}

} // namespace ebsim::tools
