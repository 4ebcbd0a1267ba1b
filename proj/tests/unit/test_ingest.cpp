#include <zlib.h>

#include <cmath>

#include "doctest.h"
#include "dwc/error.hpp"
#include "dwc/ingest.hpp"
#include "dwc/utf8.hpp"
#include "support.hpp"

using namespace dwc;
using testing::TempDir;

namespace {

// Held-out samples: none of this text appears in the reference profiles.
constexpr const char* kEnglish =
    "Every morning the old fisherman walked down to the harbour to check his nets. He had done this for "
    "more than forty years, and he knew every rock along the shore. His grandchildren liked to join him.";
constexpr const char* kChinese =
    "我们今天去公园散步，天气非常好，阳光明媚。很多人在湖边钓鱼，孩子们在草地上放风筝。晚上我们在附近的餐厅吃了"
    "一顿丰盛的晚饭，大家都很开心。明天我们打算去博物馆参观一下新的展览，听说非常有意思。";
constexpr const char* kJapanese =
    "今日は朝から雨が降っていたので、家で本を読んで過ごしました。午後になると空が晴れてきたので、近くの公園まで"
    "散歩に出かけました。夕方には友達と駅前のレストランで食事をしました。";
constexpr const char* kIndonesian =
    "Setiap pagi nelayan tua itu berjalan ke pelabuhan untuk memeriksa jaringnya. Dia sudah melakukan hal ini "
    "selama lebih dari empat puluh tahun, dan dia mengenal setiap batu di sepanjang pantai.";

IngestResult run(const IngestSpec& spec) { return ingest(spec); }

}  // namespace

TEST_CASE("detect_language: empty input is unknown with zero confidence") {
    const auto r = detect_language("");
    CHECK(r.tag == "unknown");
    CHECK(r.confidence == 0.0);
}

TEST_CASE("detect_language: held-out samples of about 200 characters") {
    REQUIRE(utf8::length(kEnglish) >= 190);
    REQUIRE(utf8::length(kChinese) >= 95);
    const auto en = detect_language(kEnglish);
    CHECK(en.tag == "en");
    CHECK(en.confidence >= 0.8);
    const auto zh = detect_language(kChinese);
    CHECK(zh.tag == "zh");
    CHECK(zh.confidence >= 0.8);
    CHECK(detect_language(kJapanese).tag == "ja");
    CHECK(detect_language(kIndonesian).tag == "id");
    CHECK(detect_language("Привет, как дела?").tag == "unknown");
}

TEST_CASE("detect_language: similarities match a direct profile computation") {
    // Oracle: recompute the English cosine blend from raw n-gram counts.
    const auto& id = LanguageIdentifier::builtin();
    const auto sample_counts = ngram_counts(kEnglish);
    const auto& profile = id.profiles().front();
    REQUIRE(profile.tag == "en");
    double expected = 0;
    for (std::size_t n = 0; n < 3; ++n) {
        double dot = 0, norm = 0;
        for (const auto& [k, v] : sample_counts[n]) {
            norm += v * v;
            if (auto it = profile.weights[n].find(k); it != profile.weights[n].end()) dot += v * it->second;
        }
        expected += LanguageIdentifier::kOrderWeights[n] * dot / std::sqrt(norm);
    }
    CHECK(id.similarities(kEnglish).front() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("detect_language is invariant under whitespace-only edits") {
    const std::string a = kEnglish;
    std::string b;
    for (char c : a) {
        b.push_back(c);
        if (c == ' ') b += "\t\n  ";
    }
    std::string c;
    for (char ch : a) {
        if (ch != ' ') c.push_back(ch);
    }
    const auto ra = detect_language(a);
    CHECK(detect_language(b) == ra);
    CHECK(detect_language(c) == ra);
    CHECK(detect_language(std::string("  ") + kChinese + "\n\n") == detect_language(kChinese));
}

TEST_CASE("ingest txt: paragraph mode yields one document per paragraph") {
    TempDir tmp;
    const auto path = tmp.write("p.txt", "first paragraph\nstill first\n\nsecond\n\n\n\nthird\n");
    IngestSpec spec;
    spec.path = path.string();
    spec.format = InputFormat::txt;
    const auto r = run(spec);
    REQUIRE(r.documents.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.documents[i].doc.provenance.record_index == i);
    CHECK(r.documents[0].doc.text == "first paragraph\nstill first");
    CHECK(r.documents[2].doc.text == "third");
    CHECK(r.report.records_in == 3);
    CHECK(r.report.documents_out == 3);
}

TEST_CASE("ingest txt: line and whole modes") {
    TempDir tmp;
    const auto path = tmp.write("l.txt", "a\r\nb\n\n c \n");
    IngestSpec spec;
    spec.path = path.string();
    spec.format = InputFormat::txt;
    spec.txt_mode = TxtMode::line;
    auto r = run(spec);
    REQUIRE(r.documents.size() == 3);
    CHECK(r.documents[0].doc.text == "a");
    CHECK(r.documents[2].doc.text == " c ");
    spec.txt_mode = TxtMode::whole;
    r = run(spec);
    REQUIRE(r.documents.size() == 1);
    CHECK(r.documents[0].doc.text == "a\nb\n\n c ");
}

TEST_CASE("ingest jsonl: fields map into the document and its context") {
    TempDir tmp;
    const auto path = tmp.write("r.jsonl", R"({"text":"hi","author":"A"})" "\n");
    IngestSpec spec;
    spec.path = path.string();
    spec.concat_fields = {"text"};
    const auto r = run(spec);
    REQUIRE(r.documents.size() == 1);
    const auto& d = r.documents[0].doc;
    CHECK(d.text == "hi");
    REQUIRE(d.context.has_value());
    CHECK(d.context->author == "A");
    CHECK(d.id == make_document_id(spec.path, 0, "hi"));
}

TEST_CASE("ingest jsonl: concatenation, attributes and domains") {
    TempDir tmp;
    const auto path = tmp.write(
        "r.jsonl",
        R"({"id":"x1","title":"T","body":"B","url":"http://a.com/","date":"2024-05-01","category":"News","subcategory":"Politics","domain":"news"})"
        "\n"
        R"({"id":"x2","body":"only body","source":"example.org","dialogue_type":"customer_service"})"
        "\n");
    IngestSpec spec;
    spec.path = path.string();
    spec.concat_fields = {"title", "body"};
    spec.domain = "web";
    const auto r = run(spec);
    REQUIRE(r.documents.size() == 2);
    const auto& a = r.documents[0];
    CHECK(a.doc.id == "x1");
    CHECK(a.doc.text == "T\nB");
    CHECK(a.doc.url == "http://a.com/");
    CHECK(a.doc.context->time == "2024-05-01");
    CHECK(a.doc.context->category_primary == "News");
    CHECK(a.doc.context->category_secondary == "Politics");
    CHECK(a.domain == "news");
    const auto& b = r.documents[1];
    CHECK(b.doc.text == "only body");
    CHECK(b.domain == "web");
    CHECK(b.doc.context->source->site_or_venue == "example.org");
    CHECK(b.doc.context->dialogue_type == DialogueType::customer_service);
}

TEST_CASE("ingest jsonl: malformed records are skipped with reasons, never silently") {
    TempDir tmp;
    const auto path = tmp.write("bad.jsonl",
                                "{\"text\":\"ok\"}\n"
                                "{broken\n"
                                "\n"
                                "[1,2]\n"
                                "{\"title\":\"no text\"}\n"
                                "{\"text\":\"\\ud800 lone\"}\n"
                                "{\"id\":\"dup\",\"text\":\"a\"}\n"
                                "{\"id\":\"dup\",\"text\":\"b\"}\n"
                                "{\"text\":\"c\",\"dialogue_type\":\"gossip\"}\n"
                                "{\"text\":\"last\"}\n");
    IngestSpec spec;
    spec.path = path.string();
    const auto r = run(spec);
    const auto& rep = r.report;
    CHECK(rep.records_in == 9);
    CHECK(rep.documents_out == 3);
    CHECK(rep.skipped == 6);
    CHECK(rep.records_in == rep.documents_out + rep.skipped);
    std::uint64_t sum = 0;
    for (const auto& [k, v] : rep.skip_reasons) sum += v;
    CHECK(sum == rep.skipped);
    CHECK(rep.skip_reasons.at("malformed_json") == 2);
    CHECK(rep.skip_reasons.at("not_an_object") == 1);
    CHECK(rep.skip_reasons.at("missing_text_field") == 1);
    CHECK(rep.skip_reasons.at("duplicate_id") == 1);
    CHECK(rep.skip_reasons.at("invalid_context") == 1);
    // Record indices count every record, including skipped ones.
    CHECK(r.documents.back().doc.provenance.record_index == 8);
}

TEST_CASE("ingest: invalid UTF-8 is replaced and counted") {
    TempDir tmp;
    const auto path = tmp.write("u.txt", std::string("caf\xC3 ok\n\nfine \xFF\xFE end\n"));
    IngestSpec spec;
    spec.path = path.string();
    spec.format = InputFormat::txt;
    const auto r = run(spec);
    REQUIRE(r.documents.size() == 2);
    CHECK(r.documents[0].doc.text == "caf\xEF\xBF\xBD ok");
    CHECK(r.report.replacement_chars == 3);
    for (const auto& d : r.documents) CHECK(utf8::is_valid(d.doc.text));
}

TEST_CASE("ingest: empty file gives an empty stream") {
    TempDir tmp;
    IngestSpec spec;
    spec.path = tmp.write("empty.jsonl", "").string();
    const auto r = run(spec);
    CHECK(r.documents.empty());
    CHECK(r.report.records_in == 0);
    CHECK(r.report.to_json().at("records_in") == 0);
}

TEST_CASE("ingest: unreadable path is fatal") {
    IngestSpec spec;
    spec.path = "/nonexistent/path.jsonl";
    CHECK_THROWS_AS(run(spec), RuntimeError);
}

TEST_CASE("ingest jsonl_gz") {
    TempDir tmp;
    const auto path = tmp / "c.jsonl.gz";
    gzFile f = gzopen(path.string().c_str(), "wb");
    const std::string body = "{\"text\":\"one\"}\n{\"text\":\"two\"}\n";
    gzwrite(f, body.data(), static_cast<unsigned>(body.size()));
    gzclose(f);
    const auto spec = ingest_spec_from_json(Json{{"path", path.string()}});
    CHECK(spec.format == InputFormat::jsonl_gz);
    const auto r = run(spec);
    REQUIRE(r.documents.size() == 2);
    CHECK(r.documents[1].doc.text == "two");
}

TEST_CASE("ingest spec JSON") {
    CHECK_THROWS_AS(ingest_spec_from_json(Json{{"path", "x"}, {"format", "parquet"}}), ConfigError);
    const auto s = ingest_spec_from_json(Json{{"path", "x.txt"}, {"txt_mode", "line"}});
    CHECK(s.format == InputFormat::txt);
    CHECK(s.txt_mode == TxtMode::line);
    CHECK(ingest_spec_from_json(to_json(s)).txt_mode == TxtMode::line);
}
