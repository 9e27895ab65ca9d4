"""Generate the bundled corpus fixtures.

Run from the repo root: python tools/make_fixtures.py

The output files are frozen under src/hirefair/data/fixtures/ and committed;
this script exists so the fixtures can be regenerated or extended. Bodies are
checked against every bundled name pool to keep unperturbed resumes name-free.
"""

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from hirefair.corpus import (  # noqa: E402
    JobPost,
    Resume,
    load_name_pools,
    name_token_pattern,
    save_corpus,
)

FIXTURES = Path(__file__).parent.parent / "src" / "hirefair" / "data" / "fixtures"

PROFILES = {
    "Data Analyst": {
        "summary": [
            "Analyst focused on turning raw operational data into clear weekly dashboards.",
            "Data specialist who builds reporting pipelines and forecasting models.",
            "Quantitative analyst experienced with churn modeling and revenue reporting.",
            "Analyst who pairs careful statistics with readable visual reports.",
        ],
        "skills": ["SQL", "Python", "Tableau", "statistics", "dbt", "Excel",
                   "forecasting", "A/B testing", "dashboards", "ETL"],
        "titles": ["Data Analyst", "Senior Data Analyst", "Reporting Analyst",
                   "Business Intelligence Analyst"],
        "companies": ["Meridian Analytics", "Bluegrid Retail", "Northlake Health",
                      "Quanta Logistics", "Harborview Finance"],
        "degree": "B.S. in Statistics",
    },
    "UX Designer": {
        "summary": [
            "Designer translating research sessions into accessible product flows.",
            "UX practitioner focused on usability testing and design systems.",
            "Product designer pairing wireframes with measurable usability goals.",
            "Designer who prototypes quickly and validates with real users.",
        ],
        "skills": ["Figma", "prototyping", "user research", "wireframing",
                   "accessibility", "design systems", "usability testing",
                   "journey mapping", "interaction design", "visual design"],
        "titles": ["UX Designer", "Senior UX Designer", "Product Designer",
                   "Interaction Designer"],
        "companies": ["Lumen Studio", "Cobalt Apps", "Fernwood Labs",
                      "Brightside Software", "Atlas Mobility"],
        "degree": "B.F.A. in Interaction Design",
    },
    "Technical Writer": {
        "summary": [
            "Writer producing developer documentation and migration guides.",
            "Documentation specialist for APIs, SDKs, and release notes.",
            "Technical writer pairing precise reference docs with tutorials.",
            "Writer who turns engineering interviews into usable manuals.",
        ],
        "skills": ["API documentation", "Markdown", "docs-as-code", "editing",
                   "information architecture", "style guides", "tutorials",
                   "release notes", "diagrams", "terminology management"],
        "titles": ["Technical Writer", "Senior Technical Writer",
                   "Documentation Engineer", "Information Developer"],
        "companies": ["Papertrail Systems", "Clearline Cloud", "Vector Tools",
                      "Summit Devices", "Riverbend Security"],
        "degree": "B.A. in English",
    },
    "Mobile Developer": {
        "summary": [
            "Mobile engineer shipping native apps with careful release hygiene.",
            "Developer focused on offline-first mobile experiences.",
        ],
        "skills": ["Swift", "Kotlin", "mobile CI", "profiling", "push messaging",
                   "app store releases", "unit testing", "UI automation"],
        "titles": ["Mobile Developer", "Senior Mobile Developer"],
        "companies": ["Pocketworks", "Skylark Media", "Transit Labs"],
        "degree": "B.S. in Computer Science",
    },
}

JOB_BODIES = {
    "Data Analyst": (
        "Data Analyst\n"
        "We are hiring a data analyst to own our reporting stack.\n"
        "Responsibilities\n"
        "- Build and maintain SQL models powering executive dashboards.\n"
        "- Partner with product teams on experiment design and A/B testing.\n"
        "- Deliver weekly forecasts with documented assumptions.\n"
        "Requirements\n"
        "- 3+ years working with SQL and Python in production settings.\n"
        "- Experience with Tableau or a comparable visualization tool.\n"
        "- Strong grounding in statistics and clear written communication.\n"
    ),
    "UX Designer": (
        "UX Designer\n"
        "Join our product team to design accessible, research-driven flows.\n"
        "Responsibilities\n"
        "- Run usability studies and translate findings into wireframes.\n"
        "- Maintain the design system alongside front-end engineers.\n"
        "- Prototype new concepts in Figma and validate them with users.\n"
        "Requirements\n"
        "- Portfolio demonstrating shipped mobile or web product work.\n"
        "- Fluency with prototyping tools and accessibility guidelines.\n"
        "- Comfort presenting research readouts to stakeholders.\n"
    ),
    "Technical Writer": (
        "Technical Writer\n"
        "We need a writer to own developer-facing documentation.\n"
        "Responsibilities\n"
        "- Write and edit API references, tutorials, and release notes.\n"
        "- Build docs-as-code workflows with the platform team.\n"
        "- Interview engineers and distill designs into clear guides.\n"
        "Requirements\n"
        "- Samples of published developer documentation.\n"
        "- Working knowledge of Markdown and version control.\n"
        "- Care for terminology consistency and information architecture.\n"
    ),
}


def make_resume_body(rng: random.Random, profession: str) -> str:
    profile = PROFILES[profession]
    title1, title2 = rng.sample(profile["titles"], 2)
    co1, co2 = rng.sample(profile["companies"], 2)
    skills = rng.sample(profile["skills"], 6)
    start = rng.randint(2012, 2016)
    mid = start + rng.randint(3, 5)
    lines = [
        profession,
        "Summary",
        rng.choice(profile["summary"]),
        "Experience",
        f"{title1}, {co1}, {mid}-2024",
        f"- Led {skills[0]} work across {rng.randint(2, 6)} product teams.",
        f"- Improved {skills[1]} practices, cutting turnaround by {rng.randint(10, 40)} percent.",
        f"{title2}, {co2}, {start}-{mid}",
        f"- Delivered {skills[2]} and {skills[3]} projects on quarterly deadlines.",
        f"- Mentored {rng.randint(1, 4)} junior colleagues on {skills[4]}.",
        "Education",
        f"{profile['degree']}, Lakeside State University, {start - 4}-{start}",
        "Skills",
        ", ".join(skills),
    ]
    return "\n".join(lines) + "\n"


def build_corpus(rng: random.Random, counts: dict[str, int], id_prefix: str,
                 job_occupations: list[str]):
    resumes = []
    i = 0
    for profession, count in counts.items():
        for _ in range(count):
            resumes.append(Resume(
                id=f"{id_prefix}{i:03d}",
                profession=profession,
                body=make_resume_body(rng, profession),
                source="generated",
            ))
            i += 1
    jobs = [
        JobPost(id=f"{id_prefix}job{j:02d}", occupation=occ, body=JOB_BODIES[occ])
        for j, occ in enumerate(job_occupations)
    ]
    return resumes, jobs


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    pools = load_name_pools()
    pattern = name_token_pattern(pools)

    rng = random.Random(20240801)
    mini_resumes, mini_jobs = build_corpus(
        rng,
        {"Data Analyst": 4, "UX Designer": 3, "Technical Writer": 3,
         "Mobile Developer": 2},
        "mini-r",
        ["Data Analyst", "UX Designer", "Technical Writer"],
    )
    rng = random.Random(20240802)
    audit_resumes, audit_jobs = build_corpus(
        rng,
        {"Data Analyst": 16, "UX Designer": 16, "Technical Writer": 16},
        "aud-r",
        ["Data Analyst", "UX Designer", "Technical Writer"],
    )

    for name, resumes, jobs in (("mini_corpus", mini_resumes, mini_jobs),
                                ("audit_corpus", audit_resumes, audit_jobs)):
        for r in resumes:
            hit = pattern.search(r.body)
            if hit:
                raise SystemExit(f"{name}: resume {r.id} contains pool name {hit.group(0)!r}")
            if "Williams" in r.body:
                raise SystemExit(f"{name}: resume {r.id} contains the fixed last name")
        save_corpus(resumes, jobs, FIXTURES / f"{name}.jsonl")
        print(f"{name}: {len(resumes)} resumes, {len(jobs)} jobs")

    manifest = {
        "resumes": len(mini_resumes),
        "jobs": len(mini_jobs),
        "occupation_groups": {
            "Data Analyst": {"resumes": 4, "jobs": 1},
            "UX Designer": {"resumes": 3, "jobs": 1},
            "Technical Writer": {"resumes": 3, "jobs": 1},
            "unmatched": {"resumes": 2, "jobs": 0},
        },
    }
    (FIXTURES / "mini_manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    run_config = {
        "schema_version": 1,
        "preset": "replication",
        "corpus": "audit_corpus.jsonl",
        "out_dir": "audit-out",
        "master_seed": 1234,
        "backends": [
            {"id": "mock-embed", "kind": "embedding", "protocol": "mock",
             "model_name": "bow-256"},
            {"id": "mock-complete", "kind": "completion", "protocol": "mock",
             "model_name": "mock-summarizer"},
        ],
        "grid": {"n_values": [5, 10, 100], "x_values": [5, 10]},
    }
    (FIXTURES / "mock_run.json").write_text(
        json.dumps(run_config, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print("mock_run.json written")


if __name__ == "__main__":
    main()
