//! Record a session against one model, then serve it back from the store.
//! A session the store has not seen is a miss, never a guess.
//!
//! ```text
//! cargo run --example record_replay
//! ```

use autorecipe::model_gateway::{ChatMessage, ChatModel, Recorder, Replay, ScriptedModel};

fn main() {
    let live = ScriptedModel::responder(|s| Some(format!("echo: {}", s.last()?.content)));
    let recorder = Recorder::new(live);
    let ask = |q: &str| vec![ChatMessage::system("You are terse."), ChatMessage::user(q)];

    for q in ["What is a furnace?", "What is a boiler?"] {
        println!("live   {}", recorder.complete(&ask(q)).unwrap());
    }
    let store = recorder.store();
    print!("\n{}\n", store.to_jsonl());

    let replay = Replay::new(&store);
    println!("replay {}", replay.complete(&ask("What is a boiler?")).unwrap());
    match replay.complete(&ask("What is a kiln?")) {
        Ok(r) => println!("replay {r}"),
        Err(e) => println!("replay miss: {e}"),
    }
}
