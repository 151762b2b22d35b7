//! Turns a browse page into the pseudo-language source and normalizes its
//! most frequent slot types into placeholders.
//!
//! cargo run --example lexicalize

use slotgen::lexicon::{
    compute_top_slot_types, lexicalize, normalize, normalize_title, BrowsePage, PlaceholderMode, PlaceholderPolicy,
    TagMap,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pages = vec![
        BrowsePage::new("en", "Running Shoes")
            .with_slot("Brand", "Swift Foot")
            .with_slot("Color", "Blue")
            .with_slot("Waterproof", "No")
            .with_title("Swift Foot Running Shoes Blue"),
        BrowsePage::new("en", "Backpacks")
            .with_slot("Brand", "Orbit")
            .with_slot("Material", "Canvas")
            .with_title("Orbit Canvas Backpacks"),
    ];
    let mut tags = TagMap::new();
    tags.insert("Brand", "_brand");

    let types = compute_top_slot_types(&pages, &tags, 1);
    println!("normalized slot types: {types:?}");
    let policy = PlaceholderPolicy::new("en", 1, types, PlaceholderMode::InferenceRetained)?;
    let training = policy.with_mode(PlaceholderMode::TrainStripped);

    for page in &pages {
        let seq = lexicalize(page, &tags)?;
        let inference = normalize(&seq, &policy);
        println!("pseudo      {seq}");
        println!("inference   {inference}");
        println!("training    {}", normalize(&seq, &training));
        let title = page.title.as_deref().unwrap_or_default();
        println!("title       {}\n", normalize_title(title, &inference.entities()).join(" "));
    }
    Ok(())
}
