use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_jsonl, write_file, Context, Exit, RunManifest};
use crate::corpus::{extract_windows, locate_mentions, normalize_text, CharacterIdentity, Passage};

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Book manifest, JSON Lines of {book_id, title, path}.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Characters, JSON Lines with character_id, book_id, name, aliases
    /// (a gold file works).
    #[arg(long)]
    pub characters: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BookEntry {
    pub book_id: String,
    #[serde(default)]
    pub title: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterEntry {
    pub character_id: String,
    pub book_id: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl CharacterEntry {
    pub fn identity(&self) -> anyhow::Result<CharacterIdentity> {
        Ok(CharacterIdentity::new(self.character_id.clone(), self.name.clone(), self.aliases.iter().cloned())?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterPassages {
    pub identity: CharacterIdentity,
    pub n_mentions: usize,
    pub passages: Vec<Passage>,
}

/// One book's passage file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BookPassages {
    pub run_id: String,
    pub book_id: String,
    pub title: String,
    pub n_words: usize,
    pub boilerplate_stripped: bool,
    pub characters: Vec<CharacterPassages>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub book_id: String,
    pub file: String,
    pub n_characters: usize,
    pub n_passages: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassageIndex {
    pub run_id: String,
    pub books: Vec<IndexEntry>,
    pub failures: Vec<String>,
}

pub const PASSAGE_DIR: &str = "passages";
pub const INDEX_FILE: &str = "index.json";

fn file_name(book_id: &str) -> String {
    let safe: String = book_id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.json")
}

fn ingest_book(
    book: &BookEntry,
    base: &Path,
    characters: &[&CharacterEntry],
    strip: bool,
    window: usize,
    run_id: &str,
) -> anyhow::Result<BookPassages> {
    let path = if book.path.is_relative() { base.join(&book.path) } else { book.path.clone() };
    let raw = std::fs::read_to_string(&path).with_context(|| format!("book {}: reading {}", book.book_id, path.display()))?;
    let norm = normalize_text(&book.book_id, &book.title, &raw, strip)?;
    let mut out = Vec::with_capacity(characters.len());
    for c in characters {
        let identity = c.identity()?;
        let mentions = locate_mentions(&norm.book, &identity);
        if mentions.is_empty() {
            tracing::warn!(book_id = %book.book_id, character_id = %c.character_id, "character never mentioned");
        }
        let passages = extract_windows(&norm.book, &identity.character_id, &mentions, window);
        out.push(CharacterPassages { identity, n_mentions: mentions.len(), passages });
    }
    Ok(BookPassages {
        run_id: run_id.to_string(),
        book_id: book.book_id.clone(),
        title: book.title.clone(),
        n_words: norm.book.len(),
        boilerplate_stripped: norm.boilerplate_stripped,
        characters: out,
    })
}

pub fn run(ctx: &Context, args: &IngestArgs) -> anyhow::Result<()> {
    let books: Vec<BookEntry> = read_jsonl(&args.manifest)?;
    let characters: Vec<CharacterEntry> = read_jsonl(&args.characters)?;
    let manifest = RunManifest::new(
        "ingest",
        ctx.config_snapshot(),
        &[args.manifest.as_path(), args.characters.as_path()],
        ctx.seed,
        !ctx.live(false),
    )?;
    let base = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut by_book: BTreeMap<&str, Vec<&CharacterEntry>> = BTreeMap::new();
    for c in &characters {
        by_book.entry(c.book_id.as_str()).or_default().push(c);
    }
    let mut failures: Vec<String> = characters
        .iter()
        .filter(|c| !books.iter().any(|b| b.book_id == c.book_id))
        .map(|c| format!("character {}: book {} is not in the manifest", c.character_id, c.book_id))
        .collect();

    let (strip, window) = (ctx.config.strip_boilerplate, ctx.config.retrieval.window_words);
    let run_id = manifest.run_id.clone();
    let results: Vec<anyhow::Result<BookPassages>> = ctx.pool()?.install(|| {
        books
            .par_iter()
            .map(|b| {
                let chars = by_book.get(b.book_id.as_str()).map(Vec::as_slice).unwrap_or_default();
                ingest_book(b, &base, chars, strip, window, &run_id)
            })
            .collect()
    });

    let dir = ctx.out.join(PASSAGE_DIR);
    let mut index = Vec::new();
    for (book, result) in books.iter().zip(results) {
        match result {
            Ok(bp) => {
                let file = file_name(&book.book_id);
                let n_passages = bp.characters.iter().map(|c| c.passages.len()).sum();
                eprintln!("{}: {} words, {} characters, {} passages", book.book_id, bp.n_words, bp.characters.len(), n_passages);
                write_file(&dir.join(&file), &(serde_json::to_string(&bp)? + "\n"))?;
                index.push(IndexEntry { book_id: book.book_id.clone(), file, n_characters: bp.characters.len(), n_passages });
            }
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    let idx = PassageIndex { run_id: manifest.run_id.clone(), books: index, failures: failures.clone() };
    write_file(&dir.join(INDEX_FILE), &(serde_json::to_string_pretty(&idx)? + "\n"))?;
    manifest.write(&ctx.out)?;
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed: {f}");
        }
        return Err(Exit::data(format!("{} ingestion failure(s)", failures.len())));
    }
    Ok(())
}

/// Loads every book listed in a passage index, keyed by character id.
pub fn load_passages(dir: &Path) -> anyhow::Result<BTreeMap<String, CharacterPassages>> {
    let index_path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&index_path).with_context(|| format!("reading {}", index_path.display()))?;
    let index: PassageIndex = serde_json::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
    let mut out = BTreeMap::new();
    for entry in &index.books {
        let path = dir.join(&entry.file);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let book: BookPassages = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for c in book.characters {
            out.insert(c.identity.character_id.clone(), c);
        }
    }
    Ok(out)
}
