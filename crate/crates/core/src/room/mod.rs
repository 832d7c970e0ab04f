//! Shoebox rooms: jittered variant generation and image-source impulse responses.

mod geometry;
mod ism;

pub use geometry::{generate_rooms, Absorption, Room, RoomGenConfig, RoomSet, RoomVariant, SofaBox};
pub use ism::{apply_rir, compute_rir, image_sources, ImageSource, Rir, RirConfig, SPEED_OF_SOUND};

/// Template rooms share the variant geometry type.
pub type RoomTemplate = Room;
