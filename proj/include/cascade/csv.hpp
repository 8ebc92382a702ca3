#ifndef CASCADE_CSV_HPP
#define CASCADE_CSV_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cascade {

/// Round-trip formatting of a double.
inline std::string format_number(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Quotes a field when it contains a separator, quote or line break.
inline std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"')
            out += '"';
        out += ch;
    }
    return out + '"';
}

class CsvTable {
public:
    using Cell = std::variant<double, long, std::string>;

    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<Cell> row)
    {
        if (row.size() != header_.size())
            throw std::invalid_argument("csv row width does not match the header");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& header() const { return header_; }
    size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    std::string str() const
    {
        std::ostringstream os;
        write_line(os, header_);
        for (const auto& r : rows_) {
            std::vector<std::string> cells;
            cells.reserve(r.size());
            for (const auto& c : r)
                cells.push_back(render(c));
            write_line(os, cells);
        }
        return os.str();
    }

    void save(const std::string& path) const
    {
        std::ofstream f(path, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + path);
        f << str();
    }

private:
    static std::string render(const Cell& c)
    {
        if (auto d = std::get_if<double>(&c))
            return format_number(*d);
        if (auto l = std::get_if<long>(&c))
            return std::to_string(*l);
        return std::get<std::string>(c);
    }

    static void write_line(std::ostream& os, const std::vector<std::string>& cells)
    {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i)
                os << ',';
            os << csv_escape(cells[i]);
        }
        os << "\r\n";
    }

    std::vector<std::string> header_;
    std::vector<std::vector<Cell>> rows_;
};

}  // namespace cascade

#endif
