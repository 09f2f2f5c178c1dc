use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use feedmatch::corpus::{
    import_bug_reports, import_reviews, write_bugs_jsonl, write_reviews_jsonl, BugFormat, ImportOptions, ReviewFormat,
};
use feedmatch::matcher::{match_batch, unmatched_reports, IndexItem, MatchIndex, MatchQuery, QueryOutcome, Side};
use feedmatch::metrics::{
    date_gap_analysis, judgment_lists, macro_average, metrics_report, noun_overlap, noun_set, resolve_annotations,
    similarity_distribution, write_distribution_csv, Averaging, DatedPair, LabeledScore, MetricsError,
    RelevanceAnnotation, Verdict,
};
use feedmatch::textproc::{align_tokenizations, linguistic_tokenize, pos_tag, PerceptronTagger, TaggedSentence};
use feedmatch::{BugReport, Embedder, MatchResult};
use feedmatch_service::ServiceConfig;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::setup::{
    corpus_failure, load_tagger, open, output, read_bugs, read_reviews, read_text, write_json, Failure,
};
use crate::{
    DatestatsArgs, EvaluateArgs, ImportArgs, MatchArgs, OverlapArgs, ServeArgs, TokensArgs, TrainTaggerArgs,
    UnmatchedArgs,
};

const ALL_APPS: &str = "all";

pub fn import(args: ImportArgs) -> Result<(), Failure> {
    let kind = match (args.format.as_str(), args.kind.as_deref()) {
        ("github-json" | "bugzilla-json" | "trac-csv", None | Some("bugs")) => "bugs",
        ("google-play-csv", None | Some("reviews")) => "reviews",
        ("normalized-jsonl", Some(k)) => k,
        ("normalized-jsonl", None) => {
            return Err(Failure::input("normalized-jsonl needs --kind bugs or --kind reviews"))
        }
        (f, Some(k)) => return Err(Failure::input(format!("format {f} does not hold {k}"))),
        (f, None) => return Err(Failure::input(format!("unknown format {f}"))),
    };
    let options = ImportOptions {
        app: args.app.clone(),
        ..ImportOptions::default()
    };
    let input = open(&args.input)?;
    let mut out = output(Some(&args.out))?;
    let count = if kind == "bugs" {
        let format: BugFormat = args.format.parse().map_err(Failure::input)?;
        let bugs = import_bug_reports(input, format, &options).map_err(|e| corpus_failure(&args.input, e))?;
        write_bugs_jsonl(&mut out, &bugs).map_err(Failure::runtime)?;
        bugs.len()
    } else {
        let format: ReviewFormat = args.format.parse().map_err(Failure::input)?;
        let reviews = import_reviews(input, format, &options).map_err(|e| corpus_failure(&args.input, e))?;
        write_reviews_jsonl(&mut out, &reviews).map_err(Failure::runtime)?;
        reviews.len()
    };
    out.flush().map_err(Failure::runtime)?;
    eprintln!("imported {count} {kind} into {}", args.out.display());
    Ok(())
}

fn bug_index(bugs: &[BugReport], embedder: &Embedder) -> Result<(MatchIndex, Vec<String>), Failure> {
    let items: Vec<IndexItem> = bugs
        .iter()
        .map(|b| IndexItem::new(&b.id, &b.summary).created(b.created_at.clone()))
        .collect();
    let (index, skipped) = MatchIndex::build(&items, Side::Bugs, embedder)?;
    if index.is_empty() {
        return Err(Failure::input(
            "no bug summary contains a noun; nothing to match against",
        ));
    }
    Ok((index, skipped))
}

pub fn run_match(args: MatchArgs) -> Result<(), Failure> {
    let reviews = read_reviews(&args.reviews)?;
    let bugs = read_bugs(&args.bugs)?;
    let embedder = args.backend.embedder()?;
    let selection = args.classify.select(&reviews)?;
    let (index, skipped_bugs) = bug_index(&bugs, &embedder)?;

    let queries: Vec<MatchQuery> = selection
        .problem_reports
        .iter()
        .map(|p| {
            let q = MatchQuery::new(p.id(), p.text()).k(args.k);
            match args.threshold {
                Some(t) => q.threshold(t),
                None => q,
            }
        })
        .collect();
    let outcomes = match_batch(&queries, &index, &embedder)?;

    let mut out = output(args.out.as_deref())?;
    let mut rows = 0;
    let mut no_nouns = Vec::new();
    for (q, outcome) in queries.iter().zip(outcomes) {
        match outcome {
            QueryOutcome::Ranked(results) => {
                for r in results {
                    writeln!(out, "{}", r.to_jsonl()).map_err(Failure::runtime)?;
                    rows += 1;
                }
            }
            QueryOutcome::NoNouns => no_nouns.push(q.query_id.as_str()),
        }
    }
    out.flush().map_err(Failure::runtime)?;

    if let Some(path) = &args.problem_reports_out {
        let mut f = output(Some(path))?;
        for p in &selection.problem_reports {
            let line = serde_json::to_string(p).map_err(Failure::runtime)?;
            writeln!(f, "{line}").map_err(Failure::runtime)?;
        }
        f.flush().map_err(Failure::runtime)?;
    }

    eprintln!(
        "reviews: {}, with at least {} words: {}, problem reports: {}",
        selection.reviews,
        args.classify.min_words,
        selection.long_enough,
        selection.problem_reports.len()
    );
    eprintln!(
        "bugs indexed: {} of {}, skipped without nouns: {}",
        index.len(),
        bugs.len(),
        skipped_bugs.len()
    );
    eprintln!(
        "ranked reports: {}, skipped without nouns: {}{}, result rows: {}",
        queries.len() - no_nouns.len(),
        no_nouns.len(),
        if no_nouns.is_empty() {
            String::new()
        } else {
            format!(" ({})", no_nouns.join(", "))
        },
        rows
    );
    Ok(())
}

/// Parses one JSON value per non-blank line, reporting `path:line` on failure.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, Failure> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let value =
            serde_json::from_str(&line).map_err(|e| Failure::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct AppScores {
    map: f64,
    hit_ratio: f64,
}

/// Two-decimal rounding, half away from zero, after dropping binary noise
/// below the sixth decimal.
fn round2(x: f64) -> f64 {
    ((x * 1e6).round() / 1e4).round() / 100.0
}

fn aggregate(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let per_app: BTreeMap<String, AppScores> =
        serde_json::from_str(&read_text(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let maps: Vec<f64> = per_app.values().map(|a| a.map).collect();
    let hits: Vec<f64> = per_app.values().map(|a| a.hit_ratio).collect();
    let map = macro_average(&maps).map_err(Failure::input)?;
    let hit_ratio = macro_average(&hits).map_err(Failure::input)?;
    let apps: BTreeMap<&str, Value> = per_app
        .iter()
        .map(|(k, v)| (k.as_str(), json!({"map": v.map, "hit_ratio": v.hit_ratio})))
        .collect();
    write_json(
        out,
        &json!({
            "averaging": "macro",
            "map": map,
            "hit_ratio": hit_ratio,
            "map_rounded": round2(map),
            "hit_ratio_rounded": round2(hit_ratio),
            "per_app": apps,
        }),
    )
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    if let Some(path) = &args.aggregate {
        return aggregate(path, args.out.as_deref());
    }
    let (Some(matches_path), Some(annotations_path)) = (&args.matches, &args.annotations) else {
        return Err(Failure::input("--matches and --annotations are required"));
    };
    if args.k == 0 {
        return Err(Failure::input(MetricsError::InvalidK));
    }
    let averaging = match args.averaging.as_str() {
        "micro" => Averaging::Micro,
        _ => Averaging::Macro,
    };
    let matches: Vec<MatchResult> = read_jsonl(matches_path)?.into_iter().map(|(_, m)| m).collect();
    let annotations: Vec<(usize, RelevanceAnnotation)> = read_jsonl(annotations_path)?;

    let pairs: BTreeSet<(&str, &str)> = matches
        .iter()
        .map(|m| (m.query_id.as_str(), m.item_id.as_str()))
        .collect();
    for (line, a) in &annotations {
        if !pairs.contains(&(a.problem_report_id.as_str(), a.bug_report_id.as_str())) {
            let known_report = matches.iter().any(|m| m.query_id == a.problem_report_id);
            let unknown = if known_report {
                &a.bug_report_id
            } else {
                &a.problem_report_id
            };
            return Err(Failure::input(format!(
                "{}:{line}: unknown id {unknown:?}: pair ({}, {}) is not in {}",
                annotations_path.display(),
                a.problem_report_id,
                a.bug_report_id,
                matches_path.display()
            )));
        }
    }
    let annotations: Vec<RelevanceAnnotation> = annotations.into_iter().map(|(_, a)| a).collect();

    let app_of: HashMap<String, String> = match &args.reviews {
        Some(p) => read_reviews(p)?.into_iter().map(|r| (r.id, r.app)).collect(),
        None => HashMap::new(),
    };
    let app = |id: &str| -> Result<String, Failure> {
        if args.reviews.is_none() {
            return Ok(ALL_APPS.to_string());
        }
        app_of
            .get(id)
            .cloned()
            .ok_or_else(|| Failure::input(format!("problem report {id:?} is not in the reviews file")))
    };

    let mut by_app: BTreeMap<String, Vec<RelevanceAnnotation>> = BTreeMap::new();
    for a in &annotations {
        by_app.entry(app(&a.problem_report_id)?).or_default().push(a.clone());
    }
    let mut apps = BTreeMap::new();
    let mut annotated = 0;
    for (name, group) in &by_app {
        let resolution = resolve_annotations(group);
        let reports: BTreeSet<&str> = group.iter().map(|a| a.problem_report_id.as_str()).collect();
        annotated += reports.len();
        let results: Vec<MatchResult> = matches
            .iter()
            .filter(|m| reports.contains(m.query_id.as_str()))
            .cloned()
            .collect();
        apps.insert(
            name.clone(),
            (judgment_lists(&results, &resolution), resolution.agreement),
        );
    }
    let report = metrics_report(&apps, args.k, &args.exclude, averaging).map_err(Failure::input)?;

    let resolution = resolve_annotations(&annotations);
    let mut scores = Vec::new();
    for m in matches.iter().filter(|m| m.rank <= args.k) {
        let relevant = match resolution.verdict(&m.query_id, &m.item_id) {
            Some(Verdict::Relevant) => true,
            Some(Verdict::Irrelevant) => false,
            _ => continue,
        };
        scores.push(LabeledScore {
            app: app(&m.query_id)?,
            relevant,
            score: m.score,
        });
    }
    if let Some(path) = &args.distribution_csv {
        let f = File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        write_distribution_csv(f, &scores).map_err(Failure::runtime)?;
    }

    let mut body = serde_json::to_value(&report).map_err(Failure::runtime)?;
    let obj = body.as_object_mut().expect("report is an object");
    obj.insert("annotated_reports".into(), json!(annotated));
    obj.insert("unresolved_pairs".into(), json!(resolution.unresolved().len()));
    obj.insert(
        "distribution".into(),
        serde_json::to_value(similarity_distribution(&scores)).map_err(Failure::runtime)?,
    );
    write_json(args.out.as_deref(), &body)?;
    eprintln!(
        "evaluated {annotated} annotated reports at k={}: map {:.4}, hit ratio {:.4}",
        args.k, report.map, report.hit_ratio
    );
    Ok(())
}

/// Texts per app from a file of normalized records or plain lines. Records
/// may be reviews (`text`) or bugs (`summary`) on either side.
fn texts_by_app(path: &Path, field: &str) -> Result<BTreeMap<String, Vec<String>>, Failure> {
    let other = if field == "text" { "summary" } else { "text" };
    let reader = BufReader::new(open(path)?);
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            let v: Value = serde_json::from_str(trimmed)
                .map_err(|e| Failure::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
            let text = v
                .get(field)
                .or_else(|| v.get(other))
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    Failure::input(format!(
                        "{}:{}: missing required field {field:?}",
                        path.display(),
                        i + 1
                    ))
                })?;
            let app = v.get("app").and_then(Value::as_str).unwrap_or(ALL_APPS);
            out.entry(app.to_string()).or_default().push(text.to_string());
        } else {
            out.entry(ALL_APPS.to_string()).or_default().push(trimmed.to_string());
        }
    }
    Ok(out)
}

pub fn overlap(args: OverlapArgs) -> Result<(), Failure> {
    let tagger = load_tagger(args.tagger_model.as_deref())?;
    let reviews = texts_by_app(&args.reviews, "text")?;
    let bugs = texts_by_app(&args.bugs, "summary")?;
    let apps: BTreeSet<&String> = reviews.keys().chain(bugs.keys()).collect();
    let none: Vec<String> = Vec::new();
    let mut out = BTreeMap::new();
    for app in apps {
        let r = reviews.get(app).unwrap_or(&none);
        let b = bugs.get(app).unwrap_or(&none);
        let (rs, bs) = (noun_set(r, &tagger), noun_set(b, &tagger));
        let overlap = match noun_overlap(r, b, &tagger) {
            Ok(x) => Some(x),
            Err(MetricsError::BothSidesEmpty) => None,
            Err(e) => return Err(Failure::runtime(e)),
        };
        out.insert(
            app.clone(),
            json!({
                "overlap": overlap,
                "review_nouns": rs.len(),
                "bug_nouns": bs.len(),
                "shared": rs.intersection(&bs).count(),
            }),
        );
    }
    write_json(args.out.as_deref(), &out)
}

pub fn unmatched(args: UnmatchedArgs) -> Result<(), Failure> {
    let reviews = read_reviews(&args.reviews)?;
    let bugs = read_bugs(&args.bugs)?;
    let embedder = args.backend.embedder()?;
    let selection = args.classify.select(&reviews)?;
    let (index, _) = bug_index(&bugs, &embedder)?;
    let items: Vec<IndexItem> = selection
        .problem_reports
        .iter()
        .map(|p| IndexItem::new(p.id(), p.text()))
        .collect();
    let result = unmatched_reports(&items, &index, args.threshold, &embedder)?;
    let mut out = output(args.out.as_deref())?;
    for r in &result.reports {
        writeln!(
            out,
            "{{\"problem_report_id\":{},\"best_score\":{:.6}}}",
            serde_json::to_string(&r.problem_report_id).map_err(Failure::runtime)?,
            r.best_score
        )
        .map_err(Failure::runtime)?;
    }
    out.flush().map_err(Failure::runtime)?;
    eprintln!(
        "problem reports: {}, below {}: {}, skipped without nouns: {}",
        items.len(),
        args.threshold,
        result.reports.len(),
        result.no_nouns.len()
    );
    Ok(())
}

pub fn datestats(args: DatestatsArgs) -> Result<(), Failure> {
    let reviews: HashMap<String, _> = read_reviews(&args.reviews)?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect();
    let bugs: HashMap<String, _> = read_bugs(&args.bugs)?.into_iter().map(|b| (b.id.clone(), b)).collect();
    let annotations: Vec<RelevanceAnnotation> = read_jsonl(&args.annotations)?.into_iter().map(|(_, a)| a).collect();
    let resolution = resolve_annotations(&annotations);
    let mut pairs = Vec::new();
    for ((r, b), verdict) in &resolution.verdicts {
        if *verdict != Verdict::Relevant {
            continue;
        }
        let review = reviews
            .get(r)
            .ok_or_else(|| Failure::input(format!("problem report {r:?} is not in {}", args.reviews.display())))?;
        let bug = bugs
            .get(b)
            .ok_or_else(|| Failure::input(format!("bug report {b:?} is not in {}", args.bugs.display())))?;
        pairs.push(DatedPair {
            problem_report_id: r.clone(),
            bug_report_id: b.clone(),
            review_created_at: review.created_at.clone(),
            bug_created_at: bug.created_at.clone(),
        });
    }
    let report = date_gap_analysis(&pairs);
    write_json(args.out.as_deref(), &report)?;
    eprintln!(
        "relevant pairs: {}, review first: {}, mean gap: {}",
        report.pairs,
        report.count_review_first,
        report
            .mean_gap_days
            .map_or("n/a".to_string(), |m| format!("{m:.1} days"))
    );
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(p) => ServiceConfig::load(p).map_err(Failure::input)?,
        None if args.test_backend => ServiceConfig::default(),
        None => return Err(Failure::input("pass --config, or --test-backend to run with defaults")),
    };
    if args.test_backend {
        config.backend = Default::default();
    }
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Failure::runtime)?;
    runtime
        .block_on(feedmatch_service::serve(config))
        .map_err(Failure::runtime)
}

pub fn tokens(args: TokensArgs) -> Result<(), Failure> {
    let text = match args.text {
        Some(t) => t,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(Failure::input)?;
            s
        }
    };
    let tagger = args.backend.tagger()?;
    let tagged = pos_tag(&linguistic_tokenize(&text), &tagger);
    let subtokens = if args.backend.configured() {
        let backend = args.backend.backend()?;
        let out = backend.embed_subtokens(&text)?;
        Some(out.tokens.into_iter().map(|t| t.subtoken).collect::<Vec<_>>())
    } else {
        None
    };
    let alignment = match &subtokens {
        Some(s) => Some(align_tokenizations(&tagged, s, text.len()).map_err(Failure::runtime)?),
        None => None,
    };

    let mut out = output(None)?;
    let mut header = "index\ttoken\tstart\tend\tupos\tnoun".to_string();
    if alignment.is_some() {
        header.push_str("\tsubtokens");
    }
    let w = |out: &mut Box<dyn Write>, line: String| writeln!(out, "{line}").map_err(Failure::runtime);
    w(&mut out, header)?;
    for (i, t) in tagged.iter().enumerate() {
        let pos = t.pos.expect("pos_tag tags every token");
        let mut line = format!(
            "{i}\t{}\t{}\t{}\t{}\t{}",
            t.text,
            t.span.start,
            t.span.end,
            pos.as_str(),
            pos.is_noun()
        );
        if let (Some(map), Some(subs)) = (&alignment, &subtokens) {
            let names: Vec<&str> = map.subtokens_of(i).iter().map(|&j| subs[j].text.as_str()).collect();
            line.push('\t');
            line.push_str(&names.join(" "));
        }
        w(&mut out, line)?;
    }
    out.flush().map_err(Failure::runtime)
}

pub fn train_tagger(args: TrainTaggerArgs) -> Result<(), Failure> {
    let mut sentences = Vec::new();
    for path in &args.corpus {
        let text = read_text(path)?;
        let parsed =
            TaggedSentence::read_corpus(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        sentences.extend(parsed);
    }
    let lexicon = match &args.lexicon {
        Some(p) => PerceptronTagger::read_lexicon(&read_text(p)?),
        None => HashMap::new(),
    };
    let (train, heldout): (Vec<_>, Vec<_>) = match args.heldout_every {
        Some(0 | 1) => return Err(Failure::input("--heldout-every must be at least 2")),
        Some(n) => {
            let (h, t): (Vec<_>, Vec<_>) = sentences.into_iter().enumerate().partition(|(i, _)| i % n == 0);
            (
                t.into_iter().map(|(_, s)| s).collect(),
                h.into_iter().map(|(_, s)| s).collect(),
            )
        }
        None => (sentences, Vec::new()),
    };
    if train.is_empty() {
        return Err(Failure::input("no training sentences"));
    }
    let mut tagger = PerceptronTagger::new(args.name.clone(), lexicon);
    let report = tagger.train(&train, args.iterations, args.seed);
    tagger.save(&args.out).map_err(Failure::runtime)?;
    eprintln!(
        "trained {:?} on {} sentences ({} tokens), {} passes, {} features, {} tag dictionary entries",
        args.name, report.sentences, report.tokens, report.iterations, report.features, report.tagdict_entries
    );
    if !heldout.is_empty() {
        eprintln!(
            "held-out accuracy on {} sentences: {:.4}",
            heldout.len(),
            tagger.accuracy(&heldout)
        );
    }
    eprintln!(
        "wrote {} ({})",
        args.out.display(),
        feedmatch::PosTagger::identity(&tagger)
    );
    Ok(())
}
