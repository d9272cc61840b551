#include <gtest/gtest.h>

#include <random>

#include "shortcut/csv.hpp"
#include "shortcut/svg.hpp"
#include "test_util.hpp"
#include "xml_check.hpp"

using namespace shortcut;

namespace {

std::vector<SeriesRecord> random_series(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<SeriesRecord> out;
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({static_cast<int>(i), t, u(gen), u(gen) / 7.0, u(gen) / 3.0, u(gen), u(gen), u(gen)});
        t = t == 0.0 ? 1e-2 : t * 1.0 + u(gen) * 0.1 + 1e-9;
    }
    return out;
}

} // namespace

TEST(Csv, SeriesHeaderIsExact) {
    const auto text = series_table({}).text();
    EXPECT_EQ(text, "step,t,I_XZ_upper,I_XZ_lower,I_ZY,train_mse,clean_test_mse,clean_test_expected_mse\n");
}

TEST(Csv, ParseBackIsIdentity) {
    const auto dir = testutil::temp_dir("csv_roundtrip");
    const auto records = random_series(200, 1);
    write_series_csv(dir + "/s.csv", records);
    const auto back = read_series_csv(dir + "/s.csv");
    EXPECT_EQ(back, records);
    write_series_csv(dir + "/t.csv", back);
    EXPECT_EQ(read_file_bytes(dir + "/s.csv"), read_file_bytes(dir + "/t.csv"));
}

TEST(Csv, FormatNumberRoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 5e-324, -2.5, 123456789.123, 0.0}) {
        const auto s = format_number(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        EXPECT_EQ(back, v) << s;
    }
    EXPECT_EQ(format_optional(std::nullopt), "");
}

TEST(Csv, SchemaErrors) {
    try {
        series_from(parse_csv("step,t,I_XZ_upper,I_XZ_lower,train_mse,clean_test_mse,clean_test_expected_mse\n"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("missing column 'I_ZY'"), std::string::npos) << e.what();
    }
    const std::string head = "step,t,I_XZ_upper,I_XZ_lower,I_ZY,train_mse,clean_test_mse,clean_test_expected_mse\n";
    EXPECT_THROW(series_from(parse_csv(head + "0,0,1,1,1,1,1,x\n")), DataError);
    EXPECT_THROW(series_from(parse_csv(head + "0,1,1,1,1,1,1,1\n1,1,1,1,1,1,1,1\n")), DataError);
    EXPECT_THROW(parse_csv(head + "0,1\n"), DataError);
    // Column order is free; lookup is by name.
    const auto t = parse_csv("I_ZY,step,clean_test_expected_mse,t,I_XZ_lower,train_mse,I_XZ_upper,clean_test_mse\n"
                             "0.5,3,8,2,4,6,1,7\n");
    const auto r = series_from(t).at(0);
    EXPECT_EQ(r, (SeriesRecord{3, 2, 1, 4, 0.5, 6, 7, 8}));
}

TEST(Svg, SingleRowChartIsValidXml) {
    svg::LineChart chart{"one point & <more>", "t", "nats", true, false, {{"run \"a\"", {5.0}, {1.0}}}};
    const auto text = svg::render(chart);
    const auto xml = testutil::parse_xml(text);
    ASSERT_TRUE(xml.ok) << xml.error;
    EXPECT_EQ(xml.elements.front().name, "svg");
    EXPECT_EQ(xml.named("circle").size(), 1u);
    EXPECT_TRUE(xml.named("polyline").empty());
}

TEST(Svg, EmptyAndDegenerateChartsStayValid) {
    for (const auto& chart :
         {svg::LineChart{"empty", "x", "y", false, false, {}},
          svg::LineChart{"flat", "x", "y", false, false, {{"c", {1, 2, 3}, {2, 2, 2}}}},
          svg::LineChart{"nan", "x", "y", true, false, {{"c", {0, 1, 2}, {NAN, INFINITY, 1}}}},
          svg::LineChart{"nonpositive", "x", "y", true, false, {{"c", {-1, 0}, {1, 2}}}}}) {
        const auto xml = testutil::parse_xml(svg::render(chart));
        EXPECT_TRUE(xml.ok) << chart.title << ": " << xml.error;
    }
}

TEST(Svg, IdenticalInputGivesIdenticalBytes) {
    const auto rec = random_series(50, 2);
    svg::Series s{"run", {}, {}};
    for (const auto& r : rec) {
        s.x.push_back(r.t);
        s.y.push_back(r.ixz_upper);
    }
    const svg::LineChart chart{"I(X;Z)", "t", "nats", true, false, {s}};
    EXPECT_EQ(svg::render(chart), svg::render(chart));
    const auto copy = chart;
    EXPECT_EQ(svg::render(copy), svg::render(chart));
}

TEST(Svg, TwoRunOverlayHasDistinctPolylines) {
    const svg::LineChart chart{"overlay", "t", "nats", false, false,
                               {{"a", {0, 1, 2}, {1, 2, 3}}, {"b", {0, 1, 2}, {3, 2, 1}}}};
    const auto xml = testutil::parse_xml(svg::render(chart));
    ASSERT_TRUE(xml.ok) << xml.error;
    const auto lines = xml.named("polyline");
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_NE(lines[0]->attrs.at("id"), lines[1]->attrs.at("id"));
    EXPECT_NE(lines[0]->attrs.at("class"), lines[1]->attrs.at("class"));
    std::set<std::string> strokes;
    for (const auto* g : xml.named("g"))
        if (g->attrs.count("id") && g->attrs.at("id").rfind("series-", 0) == 0) strokes.insert(g->attrs.at("stroke"));
    EXPECT_EQ(strokes.size(), 2u);
    // Legend text comes from the series names.
    const auto text = svg::render(chart);
    EXPECT_NE(text.find(">a</text>"), std::string::npos);
    EXPECT_NE(text.find(">b</text>"), std::string::npos);
}

TEST(Svg, LogAxisSkipsZeroTime) {
    const svg::LineChart with_zero{"c", "t", "y", true, false, {{"s", {0, 1, 10, 100}, {5, 1, 2, 3}}}};
    const svg::LineChart without{"c", "t", "y", true, false, {{"s", {1, 10, 100}, {1, 2, 3}}}};
    EXPECT_EQ(svg::render(with_zero), svg::render(without));
    EXPECT_NE(svg::render(without).find("(log scale)"), std::string::npos);
    const auto xml = testutil::parse_xml(svg::render(without));
    const auto pts = xml.named("polyline").at(0)->attrs.at("points");
    EXPECT_EQ(std::count(pts.begin(), pts.end(), ','), 3);
}

TEST(Svg, HeatmapCellsAndUniformZeroMap) {
    const auto zero = svg::render_heatmap("zero", 3, 4, std::vector<double>(12, 0.0));
    const auto xml = testutil::parse_xml(zero);
    ASSERT_TRUE(xml.ok) << xml.error;
    std::size_t cells = 0;
    for (const auto* r : xml.named("rect"))
        if (r->attrs.count("x")) {
            ++cells;
            EXPECT_EQ(r->attrs.at("fill"), "#ffffff");
        }
    EXPECT_EQ(cells, 12u);
    const auto ramp = svg::render_heatmap("ramp", 1, 2, {0.5, -1.0});
    EXPECT_NE(ramp.find("#808080"), std::string::npos);
    EXPECT_NE(ramp.find("#000000"), std::string::npos);
    EXPECT_THROW(svg::render_heatmap("bad", 2, 2, {1, 2, 3}), DataError);
}

TEST(Svg, PolarChartIsValid) {
    const svg::PolarSeries s{"traj", {1.0, 0.5, 0.0}, {0.0, 0.3, NAN}};
    const auto xml = testutil::parse_xml(svg::render_polar("polar", {s}));
    ASSERT_TRUE(xml.ok) << xml.error;
    EXPECT_EQ(xml.named("polyline").size(), 1u);
}
