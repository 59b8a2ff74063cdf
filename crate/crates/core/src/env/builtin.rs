//! The built-in five-app device used by the task suite.

use std::collections::BTreeMap;

use super::definition::*;
use super::screen::{BBox, ElementKind, SCREEN_HEIGHT, SCREEN_WIDTH};

use ElementKind::*;

fn el(id: &str, kind: ElementKind, label: &str, bbox: BBox) -> ElementDef {
    ElementDef {
        id: id.into(),
        kind,
        label: label.into(),
        bbox,
        state: BTreeMap::new(),
        list: None,
        on_click: Vec::new(),
        on_long_press: Vec::new(),
    }
}

impl ElementDef {
    fn with(mut self, key: &str, value: &str) -> Self {
        self.state.insert(key.into(), value.into());
        self
    }

    fn click(mut self, effects: Vec<Effect>) -> Self {
        self.on_click = effects;
        self
    }

    fn long(mut self, effects: Vec<Effect>) -> Self {
        self.on_long_press = effects;
        self
    }

    fn slot(mut self, list: &str, index: usize) -> Self {
        self.list = Some(ListSlot { list: list.into(), index });
        self
    }
}

fn goto(screen: &str) -> Effect {
    Effect::Goto { screen: screen.into() }
}

fn focus(element: &str) -> Effect {
    Effect::Focus { element: element.into() }
}

fn set(screen: &str, element: &str, key: &str, value: &str) -> Effect {
    Effect::SetState { screen: screen.into(), element: element.into(), key: key.into(), value: value.into() }
}

fn append(screen: &str, element: &str, key: &str, value: &str) -> Effect {
    Effect::Append { screen: screen.into(), element: element.into(), key: key.into(), value: value.into() }
}

fn select(list: &str) -> Effect {
    Effect::Select { list: list.into() }
}

fn set_selected(list: &str, key: &str, value: &str) -> Effect {
    Effect::SetSelected { list: list.into(), key: key.into(), value: value.into() }
}

fn screen(id: &str, back: Option<&str>, elements: Vec<ElementDef>) -> ScreenDef {
    ScreenDef {
        id: id.into(),
        back: back.map(Into::into),
        elements,
        on_swipe_up: Vec::new(),
        on_swipe_down: Vec::new(),
    }
}

fn text_field(id: &str, label: &str, bbox: BBox) -> ElementDef {
    el(id, TextField, label, bbox).with("text", "").click(vec![focus(id)])
}

fn backspace() -> ElementDef {
    el("backspace", Icon, "Backspace", BBox::cells(9, 20, 3, 2))
        .click(vec![Effect::BackspaceFocused])
        .long(vec![Effect::ClearFocused])
}

fn row(i: i32) -> BBox {
    BBox::cells(1, i, 10, 2)
}

fn list_rows(list: &str, prefix: &str, n: usize, first_row: i32, f: impl Fn(usize, ElementDef) -> ElementDef) -> Vec<ElementDef> {
    (0..n)
        .map(|i| {
            let e = el(&format!("{prefix}_{i}"), ListItem, &format!("{{list:{list}:{i}}}"), row(first_row + 2 * i as i32))
                .slot(list, i);
            f(i, e)
        })
        .collect()
}

fn check_contains(screen: &str, element: &str, key: &str, value: &str) -> SuccessCheck {
    SuccessCheck::Contains { screen: screen.into(), element: element.into(), key: key.into(), value: value.into() }
}

fn check_item(list: &str, item: &str, key: &str, value: &str) -> SuccessCheck {
    SuccessCheck::ItemState { list: list.into(), item: item.into(), key: key.into(), value: value.into() }
}

fn task(template: &str, success: SuccessCheck) -> TaskDef {
    TaskDef { template: template.into(), success }
}

fn slot_choice(name: &str, options: &[&str]) -> RandomSlot {
    RandomSlot { name: name.into(), kind: RandomKind::Choice { options: options.iter().map(|s| s.to_string()).collect() } }
}

fn list(name: &str, size: usize, pool: &[&str], bind: &[&str]) -> ListDef {
    ListDef {
        name: name.into(),
        size,
        pool: pool.iter().map(|s| s.to_string()).collect(),
        bind: bind.iter().map(|s| s.to_string()).collect(),
    }
}

pub const RECORDING_POOL: &[&str] = &[
    "lecture_notes.m4a", "voice_memo.m4a", "interview_q3.m4a", "song_idea.m4a",
    "meeting_0412.m4a", "birdsong.m4a", "podcast_draft.m4a", "reminder.m4a",
];
pub const NOTE_POOL: &[&str] = &[
    "Groceries", "Packing list", "Book ideas", "Workout plan", "Gift list", "Recipes", "Passwords hint", "Garden",
];
pub const PEOPLE_POOL: &[&str] = &[
    "Alice Moreau", "Bilal Khan", "Chen Wei", "Dana Novak", "Emeka Obi", "Farah Haddad", "Goran Petrov", "Hana Sato",
];
pub const NETWORK_POOL: &[&str] = &["Wi-Fi", "Bluetooth", "Airplane mode", "Mobile data", "Hotspot", "NFC"];
pub const FOLDERS: &[&str] = &["Work", "Personal", "Archive", "Travel"];

fn home() -> Vec<ScreenDef> {
    let mut home = screen(
        "home",
        None,
        vec![
            el("search", Button, "Search", BBox::cells(1, 1, 10, 1)),
            el("maps", AppIcon, "Maps", BBox::cells(1, 4, 2, 2)),
            el("music", AppIcon, "Music", BBox::cells(4, 4, 2, 2)),
            el("settings", AppIcon, "Settings", BBox::cells(1, 20, 2, 2)).click(vec![goto("settings_main")]),
            el("messages", AppIcon, "Messages", BBox::cells(4, 20, 2, 2)).click(vec![goto("messages_main")]),
            el("camera", AppIcon, "Camera", BBox::cells(7, 20, 2, 2)),
            el("phone", AppIcon, "Phone", BBox::cells(10, 20, 2, 2)),
        ],
    );
    home.on_swipe_up = vec![goto("app_drawer")];
    let mut drawer = screen(
        "app_drawer",
        Some("home"),
        vec![
            el("recorder", AppIcon, "Audio Recorder", BBox::cells(1, 3, 2, 2)).click(vec![goto("recorder_main")]),
            el("notes", AppIcon, "Notes", BBox::cells(4, 3, 2, 2)).click(vec![goto("notes_main")]),
            el("contacts", AppIcon, "Contacts", BBox::cells(7, 3, 2, 2)).click(vec![goto("contacts_main")]),
            el("calendar", AppIcon, "Calendar", BBox::cells(10, 3, 2, 2)),
            el("files", AppIcon, "Files", BBox::cells(1, 6, 2, 2)),
            el("weather", AppIcon, "Weather", BBox::cells(4, 6, 2, 2)),
        ],
    );
    drawer.on_swipe_down = vec![goto("home")];
    vec![home, drawer]
}

fn recorder() -> Vec<ScreenDef> {
    let mut main = list_rows("recordings", "rec", 4, 3, |i, e| {
        let name = format!("{{field:recorder_main.rec_{i}.name}}");
        let mut e = e.with("name", &format!("{{list:recordings:{i}}}")).click(vec![select("recordings"), goto("recorder_item")]);
        e.label = name;
        e
    });
    main.push(el("saved", ListItem, "Saved recordings", row(12)).with("files", ""));
    main.push(el("record", Button, "Record", BBox::cells(5, 19, 2, 2)).click(vec![goto("recorder_recording")]));
    vec![
        screen("recorder_main", Some("app_drawer"), main),
        screen(
            "recorder_recording",
            Some("recorder_main"),
            vec![
                el("status", Icon, "Recording in progress", BBox::cells(3, 8, 6, 2)),
                el("pause", Button, "Pause", BBox::cells(2, 19, 2, 2)),
                el("stop", Button, "Stop", BBox::cells(8, 19, 2, 2)).click(vec![
                    set("recorder_save_dialog", "name_field", "text", "Recording{rand:rec_num}"),
                    goto("recorder_save_dialog"),
                    focus("name_field"),
                ]),
            ],
        ),
        screen(
            "recorder_save_dialog",
            Some("recorder_main"),
            vec![
                text_field("name_field", "File name", row(8)),
                el("cancel", Button, "Cancel", BBox::cells(2, 11, 3, 2)).click(vec![goto("recorder_main")]),
                el("save", Button, "Save", BBox::cells(7, 11, 3, 2)).click(vec![
                    append("recorder_main", "saved", "files", "{field:recorder_save_dialog.name_field.text}"),
                    goto("recorder_main"),
                ]),
                backspace(),
            ],
        ),
        screen(
            "recorder_item",
            Some("recorder_main"),
            vec![
                el("title", Icon, "{selstate:recordings:name}", row(2)),
                el("delete", Button, "Delete", row(6))
                    .click(vec![set_selected("recordings", "hidden", "true"), goto("recorder_main")]),
                el("rename", Button, "Rename", row(9)).click(vec![
                    set("recorder_rename", "rename_field", "text", "{selstate:recordings:name}"),
                    goto("recorder_rename"),
                    focus("rename_field"),
                ]),
                el("share", Button, "Share", row(12)),
            ],
        ),
        screen(
            "recorder_rename",
            Some("recorder_item"),
            vec![
                text_field("rename_field", "New name", row(8)),
                el("cancel", Button, "Cancel", BBox::cells(2, 11, 3, 2)).click(vec![goto("recorder_item")]),
                el("ok", Button, "OK", BBox::cells(7, 11, 3, 2)).click(vec![
                    set_selected("recordings", "name", "{field:recorder_rename.rename_field.text}"),
                    goto("recorder_main"),
                ]),
                backspace(),
            ],
        ),
    ]
}

fn notes() -> Vec<ScreenDef> {
    let mut main = list_rows("notes", "note", 4, 3, |_, e| {
        e.with("folder", "Inbox").click(vec![select("notes"), goto("note_view")])
    });
    main.push(el("saved", ListItem, "Created notes", row(12)).with("titles", ""));
    main.push(el("new", Button, "New note", BBox::cells(8, 19, 3, 2)).click(vec![
        set("notes_editor", "title_field", "text", ""),
        goto("notes_editor"),
        focus("title_field"),
    ]));
    let folders = FOLDERS
        .iter()
        .enumerate()
        .map(|(i, f)| {
            el(&format!("folder_{}", f.to_lowercase()), Button, f, row(4 + 3 * i as i32))
                .click(vec![set_selected("notes", "folder", f), goto("notes_main")])
        })
        .collect();
    vec![
        screen("notes_main", Some("app_drawer"), main),
        screen(
            "notes_editor",
            Some("notes_main"),
            vec![
                text_field("title_field", "Title", row(4)),
                el("save", Button, "Save", BBox::cells(7, 8, 3, 2)).click(vec![
                    append("notes_main", "saved", "titles", "{field:notes_editor.title_field.text}"),
                    goto("notes_main"),
                ]),
                backspace(),
            ],
        ),
        screen(
            "note_view",
            Some("notes_main"),
            vec![
                el("title", Icon, "{sel:notes}", row(2)),
                el("move", Button, "Move to folder", row(6)).click(vec![goto("notes_move")]),
                el("delete", Button, "Delete note", row(9))
                    .click(vec![set_selected("notes", "hidden", "true"), goto("notes_main")]),
            ],
        ),
        screen("notes_move", Some("note_view"), folders),
    ]
}

fn contacts() -> Vec<ScreenDef> {
    let mut main = list_rows("contacts", "contact", 4, 3, |_, e| {
        e.with("favorite", "off").click(vec![
            select("contacts"),
            set("contact_view", "favorite", "checked", "{selstate:contacts:favorite}"),
            goto("contact_view"),
        ])
    });
    main.push(el("saved", ListItem, "New contacts", row(12)).with("names", "").with("phones", ""));
    main.push(el("add", Button, "Add contact", BBox::cells(8, 19, 3, 2)).click(vec![
        set("contacts_new", "name_field", "text", ""),
        set("contacts_new", "phone_field", "text", ""),
        goto("contacts_new"),
        focus("name_field"),
    ]));
    vec![
        screen("contacts_main", Some("app_drawer"), main),
        screen(
            "contacts_new",
            Some("contacts_main"),
            vec![
                text_field("name_field", "Name", row(4)),
                text_field("phone_field", "Phone", row(7)),
                el("save", Button, "Save", BBox::cells(7, 10, 3, 2)).click(vec![
                    append("contacts_main", "saved", "names", "{field:contacts_new.name_field.text}"),
                    append("contacts_main", "saved", "phones", "{field:contacts_new.phone_field.text}"),
                    goto("contacts_main"),
                ]),
                backspace(),
            ],
        ),
        screen(
            "contact_view",
            Some("contacts_main"),
            vec![
                el("title", Icon, "{sel:contacts}", row(2)),
                el("favorite", Toggle, "Favorite", row(6)).with("checked", "off").click(vec![
                    Effect::ToggleSelected { list: "contacts".into(), key: "favorite".into() },
                    set("contact_view", "favorite", "checked", "{selstate:contacts:favorite}"),
                ]),
                el("delete", Button, "Delete contact", row(9))
                    .click(vec![set_selected("contacts", "hidden", "true"), goto("contacts_main")]),
            ],
        ),
    ]
}

fn settings() -> Vec<ScreenDef> {
    let net = (0..5)
        .map(|i| {
            el(&format!("net_{i}"), Toggle, &format!("{{list:net:{i}}}"), row(3 + 2 * i as i32))
                .slot("net", i)
                .with("checked", &format!("{{rand:net_{i}}}"))
                .click(vec![Effect::ToggleSelf { key: "checked".into() }])
        })
        .collect();
    vec![
        screen(
            "settings_main",
            Some("home"),
            vec![
                el("network", ListItem, "Network & internet", row(3)).click(vec![goto("settings_network")]),
                el("display", ListItem, "Display", row(6)).click(vec![goto("settings_display")]),
                el("about", ListItem, "About phone", row(9)).click(vec![goto("settings_about")]),
                el("sound", ListItem, "Sound", row(12)),
            ],
        ),
        screen("settings_network", Some("settings_main"), net),
        screen(
            "settings_display",
            Some("settings_main"),
            vec![
                el("dark", Toggle, "Dark theme", row(3))
                    .with("checked", "off")
                    .click(vec![Effect::ToggleSelf { key: "checked".into() }]),
                el("brightness", ListItem, "Brightness", row(6)),
                el("font", ListItem, "Font size", row(9)),
            ],
        ),
        screen(
            "settings_about",
            Some("settings_main"),
            vec![
                el("device", ListItem, "Device name", row(3)).with("name", "{rand:device}").click(vec![
                    set("settings_rename", "name_field", "text", "{field:settings_about.device.name}"),
                    goto("settings_rename"),
                    focus("name_field"),
                ]),
                el("model", Icon, "Model", row(6)),
            ],
        ),
        screen(
            "settings_rename",
            Some("settings_about"),
            vec![
                text_field("name_field", "Device name", row(8)),
                el("cancel", Button, "Cancel", BBox::cells(2, 11, 3, 2)).click(vec![goto("settings_about")]),
                el("ok", Button, "OK", BBox::cells(7, 11, 3, 2)).click(vec![
                    set("settings_about", "device", "name", "{field:settings_rename.name_field.text}"),
                    goto("settings_about"),
                ]),
                backspace(),
            ],
        ),
    ]
}

fn messages() -> Vec<ScreenDef> {
    let mut main = list_rows("threads", "thread", 4, 3, |i, e| {
        e.with("unread", &format!("{{rand:unread_{i}}}"))
            .with("last_reply", "")
            .with("archived", "no")
            .click(vec![select("threads"), set("message_thread", "reply_field", "text", ""), goto("message_thread")])
            .long(vec![select("threads"), goto("thread_options")])
    });
    main.push(el("sent", ListItem, "Sent messages", row(12)).with("log", ""));
    main.push(el("new", Button, "New message", BBox::cells(8, 19, 3, 2)).click(vec![
        set("compose", "to_field", "text", ""),
        set("compose", "body_field", "text", ""),
        goto("compose"),
        focus("to_field"),
    ]));
    vec![
        screen("messages_main", Some("home"), main),
        screen(
            "message_thread",
            Some("messages_main"),
            vec![
                el("title", Icon, "{sel:threads}", row(2)),
                text_field("reply_field", "Reply", BBox::cells(1, 14, 8, 2)),
                el("send", Button, "Send", BBox::cells(9, 14, 3, 2)).click(vec![
                    set_selected("threads", "last_reply", "{field:message_thread.reply_field.text}"),
                    goto("messages_main"),
                ]),
                backspace(),
            ],
        ),
        screen(
            "thread_options",
            Some("messages_main"),
            vec![
                el("title", Icon, "{sel:threads}", row(2)),
                el("delete", Button, "Delete", row(6))
                    .click(vec![set_selected("threads", "hidden", "true"), goto("messages_main")]),
                el("archive", Button, "Archive", row(9))
                    .click(vec![set_selected("threads", "archived", "yes"), goto("messages_main")]),
                el("mute", Button, "Mute", row(12)),
            ],
        ),
        screen(
            "compose",
            Some("messages_main"),
            vec![
                text_field("to_field", "To", row(3)),
                text_field("body_field", "Message", row(6)),
                el("send", Button, "Send", BBox::cells(7, 9, 3, 2)).click(vec![
                    append("messages_main", "sent", "log", "{field:compose.to_field.text}: {field:compose.body_field.text}"),
                    goto("messages_main"),
                ]),
                backspace(),
            ],
        ),
    ]
}

fn tasks() -> Vec<TaskDef> {
    vec![
        task("recorder_save", check_contains("recorder_main", "saved", "files", "{param:filename}")),
        task("recorder_save_default", check_contains("recorder_main", "saved", "files", "Recording{rand:rec_num}")),
        task("recorder_delete", check_item("recordings", "{param:target}", "hidden", "true")),
        task("recorder_rename", check_item("recordings", "{param:target}", "name", "{param:newname}")),
        task("notes_create", check_contains("notes_main", "saved", "titles", "{param:title}")),
        task("notes_delete", check_item("notes", "{param:note}", "hidden", "true")),
        task("notes_move", check_item("notes", "{param:note}", "folder", "{param:folder}")),
        task(
            "contacts_add",
            SuccessCheck::All {
                checks: vec![
                    check_contains("contacts_main", "saved", "names", "{param:name}"),
                    check_contains("contacts_main", "saved", "phones", "{param:phone}"),
                ],
            },
        ),
        task("contacts_delete", check_item("contacts", "{param:contact}", "hidden", "true")),
        task("contacts_favorite", check_item("contacts", "{param:contact}", "favorite", "on")),
        task("settings_enable", check_item("net", "{param:setting}", "checked", "on")),
        task(
            "settings_enable_two",
            SuccessCheck::All {
                checks: vec![
                    check_item("net", "{param:setting}", "checked", "on"),
                    check_item("net", "{param:setting2}", "checked", "on"),
                ],
            },
        ),
        task(
            "settings_query",
            SuccessCheck::AnswerItemState { list: "net".into(), item: "{param:setting}".into(), key: "checked".into() },
        ),
        task(
            "settings_dark_theme",
            SuccessCheck::Equals {
                screen: "settings_display".into(),
                element: "dark".into(),
                key: "checked".into(),
                value: "on".into(),
            },
        ),
        task(
            "settings_rename_device",
            SuccessCheck::Equals {
                screen: "settings_about".into(),
                element: "device".into(),
                key: "name".into(),
                value: "{param:device_name}".into(),
            },
        ),
        task("messages_send", check_contains("messages_main", "sent", "log", "{param:recipient}: {param:message}")),
        task("messages_reply", check_item("threads", "{param:contact}", "last_reply", "{param:message}")),
        task("messages_delete_thread", check_item("threads", "{param:contact}", "hidden", "true")),
        task("messages_archive", check_item("threads", "{param:contact}", "archived", "yes")),
        task(
            "messages_query_unread",
            SuccessCheck::AnswerItemState { list: "threads".into(), item: "{param:contact}".into(), key: "unread".into() },
        ),
    ]
}

/// The built-in environment definition.
pub fn definition() -> EnvDefinition {
    let mut screens = home();
    screens.extend(recorder());
    screens.extend(notes());
    screens.extend(contacts());
    screens.extend(settings());
    screens.extend(messages());
    let mut random_slots = vec![
        RandomSlot { name: "rec_num".into(), kind: RandomKind::IntRange { lo: 1, hi: 9 } },
        slot_choice("device", &["Pixel 7", "My phone", "Work phone"]),
    ];
    random_slots.extend((0..5).map(|i| slot_choice(&format!("net_{i}"), &["on", "off"])));
    random_slots.extend((0..4).map(|i| slot_choice(&format!("unread_{i}"), &["yes", "no"])));
    EnvDefinition {
        format_version: FORMAT_VERSION,
        width: SCREEN_WIDTH,
        height: SCREEN_HEIGHT,
        home_screen: "home".into(),
        screens,
        lists: vec![
            list("recordings", 4, RECORDING_POOL, &["target"]),
            list("notes", 4, NOTE_POOL, &["note"]),
            list("contacts", 4, PEOPLE_POOL, &["contact"]),
            list("net", 5, NETWORK_POOL, &["setting", "setting2"]),
            list("threads", 4, PEOPLE_POOL, &["contact"]),
        ],
        random_slots,
        tasks: tasks(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_validates_and_round_trips() {
        let def = definition();
        def.validate().unwrap();
        let back = EnvDefinition::from_json(def.to_json().as_bytes()).unwrap();
        assert_eq!(back, def);
        assert_eq!(def.tasks.len(), 20);
    }
}
