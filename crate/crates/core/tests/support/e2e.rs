//! Three short synthetic opinions, a scripted stand-in for the model that
//! answers every pipeline prompt about them, and a runner for the whole
//! pipeline.
//!
//! The scripted model reproduces a fixed verdict pattern per method. Its
//! exchanges are recorded once into `tests/data/e2e/fixtures.jsonl`; tests
//! replay that file without any transport.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use regex::Regex;
use tod_core::corpus::{extract_metadata, split_cases, Document, MetadataRules, Splitter, SplitterConfig};
use tod_core::discourse::{fallback_tree, read_trees, split_edus, RstTree};
use tod_core::extraction::{
    run_random, ExtractionConfig, ExtractionResult, Extractor, FeatureDefinition, PlanPrompt, PredictedLabel,
};
use tod_core::gateway::{Completion, CompletionRequest, FnTransport, Gateway, Transport, TransportError};
use tod_core::prompts::PromptSet;
use tod_core::sectioning::{SectionLabel, SectioningConfig, Sectioner, SegmentedOpinion};
use tod_core::text::normalize;

use SectionLabel::*;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/e2e")
}

pub fn fixture_path() -> PathBuf {
    data_dir().join("fixtures.jsonl")
}

pub fn trees_path() -> PathBuf {
    data_dir().join("trees.jsonl")
}

/// Verdicts for vanilla, CoT, agentic and agentic + ToD.
pub type Pattern = [bool; 4];

pub struct Case {
    pub title: &'static str,
    pub header: &'static str,
    pub sections: &'static [(SectionLabel, &'static str)],
    pub gold: bool,
    pub expected: Pattern,
    /// Text unique to this opinion's damages discussion.
    pub marker: &'static str,
    /// Word identifying the EDU the discourse-aware verdict cites.
    pub cite_keyword: &'static str,
    pub agentic_finding: &'static str,
    pub tod_finding: &'static str,
    pub reasons: [&'static str; 4],
}

pub const CASES: [Case; 3] = [
    Case {
        title: "IO Group, Inc. v. Jordon",
        header: "Case No. C 08-01234 JW\nCourt: United States District Court\nDistrict: Northern District of California\nCircuit: Ninth Circuit\nDecided: June 4, 2009",
        sections: &[
            (Introduction, "Plaintiff IO Group, Inc. produces and distributes audiovisual works. It sues defendant Jordon for copyright infringement arising from the distribution of its works through a file-sharing website that defendant operated."),
            (ProceduralHistory, "Plaintiff filed its complaint in March 2008. Defendant answered but stopped taking part in discovery. Plaintiff now moves for summary judgment on liability and for statutory damages under 17 U.S.C. § 504(c)."),
            (BackgroundFacts, "Plaintiff holds registered copyrights in the twelve works at issue. Over several months defendant uploaded copies of those works to a website he controlled and invited visitors to download them at no charge. Plaintiff sent three written notices demanding removal, and the copies stayed online for months afterward."),
            (AnalysisOfInfringement, "A plaintiff proves infringement by showing ownership of a valid copyright and copying of original elements of the work. See Feist Publications, Inc. v. Rural Telephone Service Co., 499 U.S. 340 (1991). The registrations establish ownership, and defendant does not dispute that the files on his website were exact copies. Defendant is liable for infringing all twelve works."),
            (AnalysisOfReliefAndDamages, "Plaintiff elects statutory damages. The statute permits an award between $750 and $30,000 per work, and 17 U.S.C. § 504(c)(2) allows an increase to as much as $150,000 per work when the infringement is willful. Defendant kept distributing the works after three notices, and the court finds the infringement willful. An award at the bottom of the range would amount to a license fee that defendant never paid. The court therefore awards $25,000 per work, an amount meant to punish this deliberate conduct and to deter defendant and others from repeating it. The total statutory award is $300,000."),
            (AnalysisOfAttorneysFees, "Plaintiff also seeks attorneys' fees under 17 U.S.C. § 505. Because the infringement was willful, reasonable fees are appropriate, and plaintiff shall file a declaration supporting its fees within fourteen days."),
            (OrderSummary, "For these reasons, plaintiff's motion is GRANTED. Judgment shall be entered for plaintiff in the amount of $300,000 in statutory damages."),
        ],
        gold: true,
        expected: [true, false, false, true],
        marker: "$25,000 per work",
        cite_keyword: "deter",
        agentic_finding: "The court finds the infringement willful and awards $25,000 per work, which is inside the ordinary statutory range of $750 to $30,000.",
        tod_finding: "The damages discussion awards $25,000 per work and states that the amount is meant to punish the conduct and deter repetition.",
        reasons: [
            "The court raised the per-work award above a license fee and said the amount is meant to punish and deter.",
            "The award of $25,000 per work stays within the ordinary statutory range, and willfulness alone does not make it punitive.",
            "The findings show willfulness but an award inside the standard range of $750 to $30,000, so no punitive component is established.",
            "EDU {id} states that the $25,000 per work award is meant to punish and to deter, which is an explicit deterrent purpose.",
        ],
    },
    Case {
        title: "Prod. v. Rivan",
        header: "Case No. 2:15-cv-00456\nCourt: United States District Court\nDistrict: District of Oregon\nCircuit: Ninth Circuit\nDecided: February 9, 2016",
        sections: &[
            (Introduction, "Plaintiff, a motion picture production company, sued defendant Rivan for sharing one of its films over a peer-to-peer network. Plaintiff now seeks a default judgment."),
            (ProceduralHistory, "Defendant was served with the summons and complaint but never appeared. The clerk entered default, and plaintiff moved for default judgment under Rule 55(b)."),
            (AnalysisOfDefaultJudgment, "Whether to enter default judgment is a matter of discretion guided by factors that include prejudice to the plaintiff, the merits of the claim and the sum at stake. See Eitel v. McCool, 782 F.2d 1470 (9th Cir. 1986). Plaintiff would have no other recourse, and the complaint states a claim for infringement. These factors favor entry of judgment."),
            (AnalysisOfReliefAndDamages, "Plaintiff requests $150,000, the statutory maximum for willful infringement under 17 U.S.C. § 504(c)(2). By defaulting, defendant is deemed to admit that the infringement was willful. The record, however, shows one film shared by one person over a short period, and plaintiff offers no evidence of losses near the amount requested. Statutory damages should bear some relation to the harm actually suffered. The court awards $6,000, an amount adequate to compensate plaintiff for lost license revenue and the cost of enforcement."),
            (OrderSummary, "Plaintiff's motion for default judgment is GRANTED in part. Judgment shall enter for plaintiff in the amount of $6,000."),
        ],
        gold: false,
        expected: [true, true, true, false],
        marker: "$6,000",
        cite_keyword: "compensate",
        agentic_finding: "The defendant is deemed to admit willful infringement, and plaintiff sought the $150,000 statutory maximum; the court awards $6,000.",
        tod_finding: "The court declines the maximum and awards $6,000 to compensate plaintiff for lost license revenue and enforcement costs.",
        reasons: [
            "The infringement is deemed willful and the court awards statutory damages of $6,000 under the enhancement provision.",
            "Willful infringement was admitted by default, and the award under 17 U.S.C. § 504(c)(2) reflects that willfulness.",
            "The findings establish admitted willful infringement and a statutory award under the willfulness provision.",
            "EDU {id} ties the $6,000 award to compensation for lost license revenue and enforcement costs, with no punitive or deterrent purpose.",
        ],
    },
    Case {
        title: "Photo Res. Hawai'i v. Lanai Rentals",
        header: "Case No. 1:18-cv-00321\nCourt: United States District Court\nDistrict: District of Hawaii\nCircuit: Ninth Circuit\nDecided: Sept. 12, 2019",
        sections: &[
            (Introduction, "Plaintiff Photo Resources Hawai'i licenses photographs of the islands. Defendant Lanai Rentals displayed nine of plaintiff's photographs on its rental website without a license."),
            (BackgroundFacts, "Plaintiff registered the photographs before the website went live. Defendant removed the images within a week of receiving plaintiff's letter."),
            (AnalysisOfLiability, "Defendant concedes that it copied and displayed the photographs. It is liable for direct infringement of all nine images."),
            (AnalysisOfReliefAndDamages, "Plaintiff seeks statutory damages of $5,000 per photograph. Statutory damages serve purposes of compensation and deterrence. A license for comparable images would have cost about $1,200 per image. Courts in this district often award a multiple of the lost licensing fee. The court awards $3,600 per photograph, three times the licensing fee, for a total of $32,400."),
            (OrderSummary, "Judgment shall enter for plaintiff in the amount of $32,400."),
        ],
        gold: false,
        expected: [true, true, true, true],
        marker: "$3,600 per photograph",
        cite_keyword: "three times",
        agentic_finding: "The court notes that statutory damages serve deterrence and awards three times the licensing fee.",
        tod_finding: "The award of $3,600 per photograph is three times the licensing fee, in a passage that names deterrence as a purpose of statutory damages.",
        reasons: [
            "The court invokes deterrence and awards three times the lost licensing fee, which exceeds actual harm.",
            "Tripling the licensing fee after naming deterrence as a purpose functionally adds a punitive component.",
            "The findings show a treble award justified with reference to deterrence.",
            "EDU {id} awards three times the licensing fee, and the surrounding discussion names deterrence as a purpose.",
        ],
    },
];

impl Case {
    pub fn opinion(&self) -> String {
        self.sections.iter().map(|(_, t)| *t).collect::<Vec<_>>().join("\n\n")
    }

    pub fn raw(&self) -> String {
        format!("{}\n{}\nOpinion\n\n{}\n", self.title, self.header, self.opinion())
    }
}

/// Raw export text holding all three cases.
pub fn raw_export() -> String {
    CASES.iter().map(Case::raw).collect::<Vec<_>>().join("End of Document\n")
}

pub fn ingest() -> Vec<Document> {
    let splitter = Splitter::new(&SplitterConfig::default()).unwrap();
    split_cases(&raw_export(), &splitter)
        .unwrap()
        .iter()
        .map(|b| extract_metadata(&b.text, &MetadataRules::default()).unwrap())
        .collect()
}

pub fn case_for(doc: &Document) -> &'static Case {
    CASES.iter().find(|c| c.title == doc.case_title).expect("known case")
}

fn case_in(text: &str) -> Option<&'static Case> {
    CASES.iter().find(|c| text.contains(c.marker))
}

fn after<'a>(text: &'a str, marker: &str) -> &'a str {
    text.rsplit_once(marker).map(|(_, t)| t).unwrap_or("")
}

fn verdict(label: bool, reasoning: &str) -> String {
    serde_json::json!({"label": if label { "true" } else { "false" }, "reasoning": reasoning}).to_string()
}

/// Answers each pipeline prompt the way the recorded model did.
pub fn scripted_reply(req: &CompletionRequest) -> String {
    let p = &req.messages[0].content;
    if p.starts_with("You are a detail-oriented legal analyst") && p.contains("segment the legal") {
        let doc = after(p, "The document:\n");
        let items: Vec<_> = doc
            .split("\n\n")
            .filter(|s| !s.trim().is_empty())
            .enumerate()
            .map(|(i, s)| serde_json::json!({"index": i, "content": s.trim()}))
            .collect();
        return serde_json::json!({ "result": items }).to_string();
    }
    if p.starts_with("You are a detail-oriented legal analyst") {
        let task: serde_json::Value = serde_json::from_str(after(p, "The task:\n").trim()).unwrap();
        let target = normalize(task["target_section"].as_str().unwrap());
        let label = CASES
            .iter()
            .flat_map(|c| c.sections.iter())
            .find(|(_, t)| normalize(t) == target)
            .map(|(l, _)| l.as_str().to_string())
            .unwrap_or_else(|| "Introduction".into());
        return serde_json::json!({ "result": label }).to_string();
    }
    if p.starts_with("You are a helpful legal assistant") {
        let target = after(p, "The target text span is:\n");
        let target = target.split("\n\nPlease generate").next().unwrap_or("").trim();
        let relation = Regex::new(r"--(\S+) \(").unwrap();
        let rel = relation.captures(p).map(|c| c[1].to_string()).unwrap_or_else(|| "span".into());
        let short = tod_core::text::first_words(target, 8);
        let role = if target.contains("deter") || target.contains("punish") {
            "states the purpose of the award, presenting the amount as punishment and deterrence rather than compensation alone"
        } else if target.contains("compensate") {
            "explains the amount chosen, tying it to compensation for lost revenue rather than to punishment"
        } else if target.contains("three times") {
            "gives the method for the award, a multiple of the licensing fee"
        } else {
            "adds detail to the court's discussion of the damage award"
        };
        return format!(
            "The segment \"{short}...\" {role}. Through a {rel} relation it supports the passage above it, which sets out how the court arrived at the remedy."
        );
    }
    if p.starts_with("You are executing one step") {
        let inputs = after(p, "Inputs:\n");
        let case = case_in(inputs).expect("step inputs identify the case");
        let replanned = p.contains("Current step:\nRe-read");
        let tod = inputs.contains("Discourse-Supported Explanations:");
        let finding = if tod { case.tod_finding } else { case.agentic_finding };
        return if replanned {
            format!("After re-planning: {finding}")
        } else {
            finding.to_string()
        };
    }
    if p.starts_with("You executed an extraction plan") {
        let findings = after(p, "Findings:\n");
        let inconsistent = findings.contains("$150,000") && !findings.contains("After re-planning");
        return if inconsistent {
            r#"{"consistent": false, "issue": "The findings do not say why the court chose the amount it awarded."}"#.into()
        } else {
            r#"{"consistent": true, "issue": ""}"#.into()
        };
    }
    if p.contains("Inputs available when the plan is executed:") {
        if req.messages.len() > 1 {
            return r#"{"steps": ["Re-read the damages discussion and state the purpose the court gives for the amount awarded."]}"#.into();
        }
        return r#"{"steps": ["Locate the damages award and the statutory provision it relies on.", "Find any statement of why the court chose that amount, quoting it."]}"#.into();
    }
    if p.starts_with("You are a legal analyst") {
        let case = case_in(p).expect("verdict prompt identifies the case");
        if p.contains("Discourse-Supported Explanations:") {
            let edu = Regex::new(r#"EDU (\d+): "([^\n]*)""#).unwrap();
            let id = edu
                .captures_iter(p)
                .find(|c| c[2].contains(case.cite_keyword))
                .map(|c| c[1].to_string())
                .expect("cited EDU among explanations");
            return verdict(case.expected[3], &case.reasons[3].replace("{id}", &id));
        }
        if p.trim_end().ends_with("Let's think step by step.") {
            return format!(
                "The opinion awards statutory damages, so the question is whether the court tied the amount to punishment or deterrence.\n{}\n\n{}",
                case.reasons[1],
                verdict(case.expected[1], case.reasons[1])
            );
        }
        if p.contains("Findings from the extraction plan:") {
            return verdict(case.expected[2], case.reasons[2]);
        }
        return verdict(case.expected[0], case.reasons[0]);
    }
    panic!("unscripted prompt: {}", &p[..p.len().min(200)]);
}

pub fn scripted_transport() -> Arc<dyn Transport> {
    Arc::new(FnTransport(|req: &CompletionRequest| -> Result<Completion, TransportError> {
        Ok(Completion::text(scripted_reply(req)))
    }))
}

pub fn fallback_trees(docs: &[Document]) -> Vec<RstTree> {
    docs.iter()
        .map(|d| fallback_tree(d.id.clone(), split_edus(&d.opinion_text)).unwrap())
        .collect()
}

pub fn load_trees() -> Vec<RstTree> {
    read_trees(std::io::BufReader::new(std::fs::File::open(trees_path()).unwrap())).unwrap()
}

pub struct CaseRun {
    pub title: String,
    pub gold: bool,
    pub segmentation: SegmentedOpinion,
    /// Random, vanilla, CoT, agentic, agentic + ToD.
    pub results: Vec<ExtractionResult>,
}

pub const RANDOM_SEED: u64 = 7;

/// Runs segmentation, labeling and all five methods over the three cases.
pub fn run_pipeline(gateway: &Gateway, trees: &[RstTree]) -> Vec<CaseRun> {
    let prompts = PromptSet::default();
    let docs = ingest();
    let sectioner = Sectioner::new(gateway, &prompts, SectioningConfig::default());
    let extractor = Extractor::new(gateway, &prompts, ExtractionConfig::default());
    let feature = FeatureDefinition::punitive_component();
    let seed = PlanPrompt::seed(&feature, &prompts);
    let ids: Vec<_> = docs.iter().map(|d| d.id.clone()).collect();
    let random = run_random(&ids, &feature.id, 0.4, RANDOM_SEED).unwrap();
    docs.iter()
        .zip(random)
        .map(|(doc, random)| {
            let seg = sectioner.segment_and_label(doc).unwrap();
            let tree = trees.iter().find(|t| t.doc_id == doc.id).expect("tree for document");
            let results = vec![
                random,
                extractor.vanilla(doc, &feature).unwrap(),
                extractor.cot(doc, &feature).unwrap(),
                extractor.agentic(doc, &feature, &seed).unwrap(),
                extractor.agentic_tod(doc, &seg, tree, &feature, &seed).unwrap(),
            ];
            CaseRun {
                title: doc.case_title.clone(),
                gold: case_for(doc).gold,
                segmentation: seg,
                results,
            }
        })
        .collect()
}

/// Verdicts of the four LLM methods per case title.
pub fn verdicts(runs: &[CaseRun]) -> BTreeMap<String, Pattern> {
    runs.iter()
        .map(|r| {
            let l = |i: usize| r.results[i].label == PredictedLabel::True;
            (r.title.clone(), [l(1), l(2), l(3), l(4)])
        })
        .collect()
}
