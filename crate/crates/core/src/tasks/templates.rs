//! The built-in task templates.

use super::{ExpertAction as E, ParamGen as P, TaskTemplate};
use crate::env::builtin::{FOLDERS, NETWORK_POOL};

const MESSAGES: &[&str] = &["See you at 5", "Running late", "Call me back", "Thanks a lot", "On my way", "Sounds good"];

pub fn builtin() -> Vec<TaskTemplate> {
    vec![
        TaskTemplate {
            id: "recorder_save",
            app: "recorder",
            goal: "Record an audio clip using Audio Recorder app and save it as '{filename}'.",
            params: vec![("filename", P::Filename)],
            script: vec![E::SwipeUp, E::Tap("recorder"), E::Tap("record"), E::Tap("stop"), E::LongPress("backspace"), E::Type("filename"), E::Tap("save")],
        },
        TaskTemplate {
            id: "recorder_save_default",
            app: "recorder",
            goal: "Record an audio clip using Audio Recorder app and save it with the default name.",
            params: vec![],
            script: vec![E::SwipeUp, E::Tap("recorder"), E::Tap("record"), E::Tap("stop"), E::Tap("save")],
        },
        TaskTemplate {
            id: "recorder_delete",
            app: "recorder",
            goal: "Delete the recording '{target}' in Audio Recorder.",
            params: vec![("target", P::Filename)],
            script: vec![E::SwipeUp, E::Tap("recorder"), E::TapLabel("target"), E::Tap("delete")],
        },
        TaskTemplate {
            id: "recorder_rename",
            app: "recorder",
            goal: "Rename the recording '{target}' to '{newname}' in Audio Recorder.",
            params: vec![("target", P::Filename), ("newname", P::Filename)],
            script: vec![
                E::SwipeUp, E::Tap("recorder"), E::TapLabel("target"), E::Tap("rename"),
                E::LongPress("backspace"), E::Type("newname"), E::Tap("ok"),
            ],
        },
        TaskTemplate {
            id: "notes_create",
            app: "notes",
            goal: "Create a note titled '{title}' in Notes.",
            params: vec![("title", P::Title)],
            script: vec![E::SwipeUp, E::Tap("notes"), E::Tap("new"), E::Type("title"), E::Tap("save")],
        },
        TaskTemplate {
            id: "notes_delete",
            app: "notes",
            goal: "Delete the note '{note}' in Notes.",
            params: vec![("note", P::Title)],
            script: vec![E::SwipeUp, E::Tap("notes"), E::TapLabel("note"), E::Tap("delete")],
        },
        TaskTemplate {
            id: "notes_move",
            app: "notes",
            goal: "Move the note '{note}' to the folder '{folder}'.",
            params: vec![("note", P::Title), ("folder", P::Choice(FOLDERS))],
            script: vec![E::SwipeUp, E::Tap("notes"), E::TapLabel("note"), E::Tap("move"), E::TapLabel("folder")],
        },
        TaskTemplate {
            id: "contacts_add",
            app: "contacts",
            goal: "Add a contact named '{name}' with phone number '{phone}'.",
            params: vec![("name", P::Person), ("phone", P::Phone)],
            script: vec![
                E::SwipeUp, E::Tap("contacts"), E::Tap("add"), E::Type("name"),
                E::Tap("phone_field"), E::Type("phone"), E::Tap("save"),
            ],
        },
        TaskTemplate {
            id: "contacts_delete",
            app: "contacts",
            goal: "Delete '{contact}' from Contacts.",
            params: vec![("contact", P::Person)],
            script: vec![E::SwipeUp, E::Tap("contacts"), E::TapLabel("contact"), E::Tap("delete")],
        },
        TaskTemplate {
            id: "contacts_favorite",
            app: "contacts",
            goal: "Mark '{contact}' as a favorite contact.",
            params: vec![("contact", P::Person)],
            script: vec![E::SwipeUp, E::Tap("contacts"), E::TapLabel("contact"), E::Tap("favorite"), E::Back],
        },
        TaskTemplate {
            id: "settings_enable",
            app: "settings",
            goal: "Turn on '{setting}' in Settings.",
            params: vec![("setting", P::Choice(NETWORK_POOL))],
            script: vec![E::Tap("settings"), E::Tap("network"), E::EnsureOn("setting")],
        },
        TaskTemplate {
            id: "settings_enable_two",
            app: "settings",
            goal: "Turn on both '{setting}' and '{setting2}' in Settings.",
            params: vec![("setting", P::Choice(NETWORK_POOL)), ("setting2", P::Choice(NETWORK_POOL))],
            script: vec![E::Tap("settings"), E::Tap("network"), E::EnsureOn("setting"), E::EnsureOn("setting2")],
        },
        TaskTemplate {
            id: "settings_query",
            app: "settings",
            goal: "Is '{setting}' turned on? Answer 'on' or 'off'.",
            params: vec![("setting", P::Choice(NETWORK_POOL))],
            script: vec![E::Tap("settings"), E::Tap("network"), E::AnswerState("setting", "checked")],
        },
        TaskTemplate {
            id: "settings_dark_theme",
            app: "settings",
            goal: "Enable the dark theme in Settings.",
            params: vec![],
            script: vec![E::Tap("settings"), E::Tap("display"), E::Tap("dark")],
        },
        TaskTemplate {
            id: "settings_rename_device",
            app: "settings",
            goal: "Change the device name to '{device_name}'.",
            params: vec![("device_name", P::DeviceName)],
            script: vec![
                E::Tap("settings"), E::Tap("about"), E::Tap("device"), E::LongPress("backspace"),
                E::Type("device_name"), E::Tap("ok"),
            ],
        },
        TaskTemplate {
            id: "messages_send",
            app: "messages",
            goal: "Send the message '{message}' to '{recipient}'.",
            params: vec![("message", P::Choice(MESSAGES)), ("recipient", P::Person)],
            script: vec![
                E::Tap("messages"), E::Tap("new"), E::Type("recipient"), E::Tap("body_field"),
                E::Type("message"), E::Tap("send"),
            ],
        },
        TaskTemplate {
            id: "messages_reply",
            app: "messages",
            goal: "Reply '{message}' to the conversation with '{contact}'.",
            params: vec![("message", P::Choice(MESSAGES)), ("contact", P::Person)],
            script: vec![E::Tap("messages"), E::TapLabel("contact"), E::Tap("reply_field"), E::Type("message"), E::Tap("send")],
        },
        TaskTemplate {
            id: "messages_delete_thread",
            app: "messages",
            goal: "Delete the conversation with '{contact}' in Messages.",
            params: vec![("contact", P::Person)],
            script: vec![E::Tap("messages"), E::LongPressLabel("contact"), E::Tap("delete")],
        },
        TaskTemplate {
            id: "messages_archive",
            app: "messages",
            goal: "Archive the conversation with '{contact}' in Messages.",
            params: vec![("contact", P::Person)],
            script: vec![E::Tap("messages"), E::LongPressLabel("contact"), E::Tap("archive")],
        },
        TaskTemplate {
            id: "messages_query_unread",
            app: "messages",
            goal: "Is there an unread message from '{contact}'? Answer 'yes' or 'no'.",
            params: vec![("contact", P::Person)],
            script: vec![E::Tap("messages"), E::AnswerState("contact", "unread")],
        },
    ]
}
