//! The four-action grammar: parsing decision completions, rendering actions
//! back, and turning boxes and swipes into screen coordinates.
//!
//! ```bash
//! cargo run --example parse_actions
//! ```

use tapwise::device::swipe_geometry;
use tapwise::gateway::parse_verdict;
use tapwise::{bbox_center, parse_decision, render_action, BoundingBox, Direction};

const COMPLETIONS: &[&str] = &[
    "ACTION: CLICK\nTARGET: click on the email with the subject 'Meeting Agenda'.",
    "The search box is focused.\n**ACTION:** TYPE\n**TEXT:** usb cable",
    "ACTION: OPEN_APP\nAPP: Gmail",
    "Thought: the list continues below.\nACTION: SWIPE\nDIRECTION: up",
    // First block is malformed, the second one wins.
    "ACTION: SWIPE\nDIRECTION: diagonally\nACTION: SWIPE\nDIRECTION: down",
    "I think we are done here.",
];

fn main() {
    println!("-- decisions --");
    for raw in COMPLETIONS {
        match parse_decision(raw) {
            Ok(a) => println!("{:<70} => {}", raw.replace('\n', "\\n"), render_action(&a).replace('\n', " | ")),
            Err(e) => println!("{:<70} => error: {e}", raw.replace('\n', "\\n")),
        }
    }

    println!("\n-- verdicts --");
    for raw in ["STATUS: SUCCESS\nThe inbox is open.", "status: failure\nStill on the home screen.", "Looks fine to me"] {
        println!("{:<45} => {:?}", raw.replace('\n', "\\n"), parse_verdict(raw));
    }

    println!("\n-- geometry on a 1080x2400 screen --");
    let b = BoundingBox::new(0.29, 0.7, 0.46, 0.8).unwrap();
    let p = bbox_center(&b, 1080, 2400).unwrap();
    println!("box {:?} taps at ({}, {})", b.as_array(), p.x(), p.y());
    // Degenerate boxes are points; the right and bottom edges clamp inside.
    let edge = BoundingBox::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let p = bbox_center(&edge, 1080, 2400).unwrap();
    println!("box {:?} taps at ({}, {})", edge.as_array(), p.x(), p.y());
    for d in Direction::ALL {
        let g = swipe_geometry(d, 1080, 2400).unwrap();
        println!("swipe {d:<5} ({}, {}) -> ({}, {}) over {} ms", g.from.x(), g.from.y(), g.to.x(), g.to.y(), g.duration_ms);
    }
}
