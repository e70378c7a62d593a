//! Hand-built dataset fixtures shared by integration tests.
#![allow(dead_code)]

use std::path::Path;

use layerbench::codec;
use layerbench::dataset::{DatasetManifest, LayerEntry, PromptSpec, Quality, SampleEntry};
use layerbench::{AlphaMap, BinaryMask, Image, LayerKind};

type Region = Box<dyn Fn(usize, usize) -> bool>;

pub const H: usize = 16;
pub const W: usize = 16;

pub fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> impl Fn(usize, usize) -> bool {
    move |x, y| x >= x0 && x < x1 && y >= y0 && y < y1
}

/// Writes a layer whose support is `support` and whose visible part is
/// `visible ∧ support`.
pub fn write_layer(
    root: &Path,
    name: &str,
    support: impl Fn(usize, usize) -> bool,
    visible: impl Fn(usize, usize) -> bool,
) -> (String, String) {
    let rgb = Image::from_fn(H, W, |x, y| {
        if support(x, y) {
            [(x * 16) as f64 / 255.0, (y * 16) as f64 / 255.0, 0.5]
        } else {
            [0.0; 3]
        }
    });
    let alpha = AlphaMap::from_fn(H, W, |x, y| if support(x, y) { 1.0 } else { 0.0 });
    let vis = BinaryMask::from_fn(H, W, |x, y| support(x, y) && visible(x, y));
    let rgba = format!("{name}.png");
    let v = format!("{name}_vis.png");
    codec::write_rgba(&root.join(&rgba), &rgb, &alpha).unwrap();
    codec::write_mask(&root.join(&v), &vis).unwrap();
    (rgba, v)
}

pub fn entry(id: &str, kind: LayerKind, paths: (String, String)) -> LayerEntry {
    LayerEntry {
        id: id.into(),
        kind,
        rgba_path: paths.0,
        visibility_path: paths.1,
        prompts: vec![],
        occluded: None,
        quality: None,
        salient: None,
    }
}

pub fn write_image(root: &Path, name: &str) -> String {
    let p = format!("{name}.png");
    codec::write_rgb(&root.join(&p), &Image::from_fn(H, W, |x, y| [x as f64 / 15.0, y as f64 / 15.0, 0.2])).unwrap();
    p
}

/// Three samples, five layers, every prompt kind.
pub fn golden(root: &Path) -> DatasetManifest {
    codec::write_mask(&root.join("prompt_mask.png"), &BinaryMask::from_fn(H, W, rect(2, 2, 6, 6))).unwrap();
    let img = write_image(root, "image");
    let bg = write_image(root, "plate");
    let all = |_: usize, _: usize| true;
    let mut cup = entry("cup", LayerKind::Foreground, write_layer(root, "cup", rect(2, 2, 10, 10), rect(0, 0, 6, 16)));
    cup.prompts = vec![
        PromptSpec::Point { value: [3, 3] },
        PromptSpec::Box { value: [2, 2, 10, 10] },
        PromptSpec::Combo {
            text: "the cup".into(),
            spatial: Box::new(PromptSpec::Mask {
                path: "prompt_mask.png".into(),
            }),
        },
    ];
    cup.occluded = Some(true);
    cup.quality = Some(Quality::Good);
    cup.salient = Some(true);
    let mut plate = entry("plate", LayerKind::Background, write_layer(root, "plate_layer", all, rect(10, 0, 16, 16)));
    plate.prompts = vec![PromptSpec::Background];
    plate.quality = Some(Quality::Neutral);
    let mut dog = entry("dog", LayerKind::Foreground, write_layer(root, "dog", rect(0, 8, 16, 16), all));
    dog.prompts = vec![PromptSpec::Text { value: "dog".into() }];
    dog.quality = Some(Quality::Poor);
    let cat = entry("cat", LayerKind::Foreground, write_layer(root, "cat", rect(4, 4, 12, 12), all));
    let bg2 = entry("bg", LayerKind::Background, write_layer(root, "bg2", all, all));
    let sample = |id: &str, background: Option<String>, layers| SampleEntry {
        id: id.into(),
        image_path: img.clone(),
        background_path: background,
        layers,
    };
    DatasetManifest::new(vec![
        sample("kitchen", Some(bg.clone()), vec![cup, plate]),
        sample("yard", None, vec![dog]),
        sample("sofa", Some(bg), vec![cat, bg2]),
    ])
}

/// One sample with five foreground layers hidden by 0, 1, 2, 50 and 100
/// percent; three of them are occluded at the 1% threshold.
pub fn occlusion_fixture(root: &Path) -> DatasetManifest {
    let img = write_image(root, "image");
    let support = rect(0, 0, 10, 10);
    let specs: [(&str, Region); 5] = [
        ("full", Box::new(|_, _| true)),
        // 1 of 100 hidden: exactly at the threshold, not occluded
        ("edge", Box::new(|x, y| !(x == 0 && y == 0))),
        ("two", Box::new(|x, y| !(y == 0 && x < 2))),
        ("half", Box::new(|x, _| x < 5)),
        ("gone", Box::new(|_, _| false)),
    ];
    let layers = specs
        .into_iter()
        .map(|(id, vis)| entry(id, LayerKind::Foreground, write_layer(root, id, &support, vis)))
        .collect();
    DatasetManifest::new(vec![SampleEntry {
        id: "s".into(),
        image_path: img,
        background_path: None,
        layers,
    }])
}
