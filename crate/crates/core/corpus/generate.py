#!/usr/bin/env python3
"""Regenerates the bundled simulator corpus.

Writes the app specs, the reference task suite with its reward maps, the
scripted-model files for exploration and deployment, the demonstration
event lists and the hand-written documents. The expected benchmark numbers
pinned in suite.toml are computed here from the task design, independently
of the Rust harness that later reproduces them.

Run from anywhere: python3 generate.py
"""

import json
import os
from collections import deque
from fractions import Fraction

HERE = os.path.dirname(os.path.abspath(__file__))
SCREEN = (360, 640)
MAX_STEPS = 10

# ---------------------------------------------------------------- apps

BTN, EDIT, LIST, IMG, SLIDER = "btn", "edit", "list", "img", "slider"
CLASSES = {
    BTN: "android.widget.Button",
    EDIT: "android.widget.EditText",
    LIST: "android.widget.ListView",
    IMG: "android.widget.ImageView",
    SLIDER: "android.widget.SeekBar",
}


def el(name, kind, text="", desc=""):
    return {"name": name, "kind": kind, "text": text, "desc": desc}


def page(pid, title, elements, transitions=(), irrelevant=False, sink=None):
    return {
        "id": pid,
        "title": title,
        "elements": elements,
        "transitions": list(transitions),
        "irrelevant": irrelevant,
        "sink": sink,
    }


APPS = {
    "mail": {
        "package": "com.example.mail",
        "start": "inbox",
        "pages": [
            page("inbox", "Inbox", [
                el("compose", BTN, "Compose"),
                el("search", BTN, desc="Search"),
                el("promo", BTN, "Offers"),
                el("menu", BTN, desc="More options"),
                el("message_list", LIST),
            ], [("compose", "tap", None, "compose"), ("promo", "tap", None, "promo"),
                ("menu", "tap", None, "settings"), ("message_list", "swipe", "up", "older")]),
            page("compose", "New message", [
                el("recipient", EDIT),
                el("attach", BTN, desc="Attach"),
                el("send", BTN, "Send"),
            ], [("send", "tap", None, "sent")], sink="recipient"),
            page("sent", "Sent", [el("done", BTN, "Done")]),
            page("promo", "Special offer", [el("claim", BTN, "Claim now")], irrelevant=True),
            page("settings", "Settings", [
                el("signature", BTN, "Signature"),
                el("notifications", BTN, "Notifications"),
                el("account", BTN, "Account"),
            ], [("signature", "tap", None, "signature")]),
            page("signature", "Signature", [
                el("signature_field", EDIT),
                el("save", BTN, "Save"),
            ], [("save", "tap", None, "signature_saved")], sink="signature_field"),
            page("signature_saved", "Signature saved", [
                el("signature_field", EDIT),
                el("ok", BTN, "OK"),
            ], sink="signature_field"),
            page("older", "Older messages", [el("message", BTN, "Quarterly report")],
                 [("message", "tap", None, "message")]),
            page("message", "Quarterly report", [
                el("reply", BTN, "Reply"),
                el("forward", BTN, "Forward"),
            ], [("reply", "tap", None, "compose")]),
        ],
    },
    "clock": {
        "package": "com.example.clock",
        "start": "alarms",
        "pages": [
            page("alarms", "Alarms", [
                el("add", BTN, desc="Add alarm"),
                el("stopwatch_tab", BTN, "Stopwatch"),
                el("timer_tab", BTN, "Timer"),
                el("alarm_list", LIST),
            ], [("add", "tap", None, "new_alarm"), ("stopwatch_tab", "tap", None, "stopwatch"),
                ("timer_tab", "tap", None, "timer")]),
            page("new_alarm", "New alarm", [
                el("hour_field", BTN, "6:00"),
                el("label_field", BTN, "Label"),
                el("save", BTN, "Save"),
            ], [("hour_field", "tap", None, "hour_picker")]),
            page("hour_picker", "Set hour", [
                el("hour_wheel", LIST),
                el("save", BTN, "Save"),
            ], [("hour_wheel", "swipe", "up", "hour_seven")]),
            page("hour_seven", "Set hour", [
                el("hour_wheel", LIST),
                el("save", BTN, "Save"),
            ], [("save", "tap", None, "alarm_saved")]),
            page("alarm_saved", "Alarm set", [el("done", BTN, "Done")]),
            page("stopwatch", "Stopwatch", [
                el("start", BTN, "Start"),
                el("reset", BTN, "Reset"),
            ], [("start", "tap", None, "stopwatch_running")]),
            page("stopwatch_running", "Stopwatch", [
                el("lap", BTN, "Lap"),
                el("stop", BTN, "Stop"),
            ]),
            page("timer", "Timer", [
                el("minutes", EDIT),
                el("start", BTN, "Start"),
            ], [("start", "tap", None, "timer_running")], sink="minutes"),
            page("timer_running", "Timer running", [
                el("minutes", EDIT),
                el("pause", BTN, "Pause"),
            ], sink="minutes"),
        ],
    },
    "notes": {
        "package": "com.example.notes",
        "start": "notes_list",
        "pages": [
            page("notes_list", "Notes", [
                el("new_note", BTN, desc="New note"),
                el("search", BTN, desc="Search"),
                el("groceries", BTN, "Groceries"),
                el("trash", BTN, desc="Trash"),
                el("sponsored", BTN, "Sponsored"),
            ], [("new_note", "tap", None, "editor"), ("groceries", "tap", None, "note_groceries"),
                ("trash", "tap", None, "trash"), ("sponsored", "tap", None, "ad")]),
            page("editor", "New note", [
                el("body", EDIT),
                el("save", BTN, "Save"),
            ], [("save", "tap", None, "note_saved")], sink="body"),
            page("note_saved", "Note saved", [
                el("body", EDIT),
                el("ok", BTN, "OK"),
            ], sink="body"),
            page("note_groceries", "Groceries", [
                el("share", BTN, desc="Share"),
                el("delete", BTN, desc="Delete"),
                el("pin", BTN, desc="Pin"),
            ], [("share", "tap", None, "share_sheet"), ("delete", "tap", None, "confirm_delete")]),
            page("share_sheet", "Share via", [
                el("email", BTN, "Email"),
                el("copy", BTN, "Copy link"),
            ]),
            page("confirm_delete", "Delete note?", [
                el("confirm", BTN, "Delete"),
                el("cancel", BTN, "Cancel"),
            ], [("confirm", "tap", None, "note_deleted")]),
            page("note_deleted", "Note deleted", [el("ok", BTN, "OK")]),
            page("trash", "Trash", [
                el("empty", BTN, "Empty trash"),
                el("restore", BTN, "Restore all"),
            ], [("empty", "tap", None, "trash_empty")]),
            page("trash_empty", "Trash is empty", [el("ok", BTN, "OK")]),
            page("ad", "Sponsored", [el("install", BTN, "Install")], irrelevant=True),
        ],
    },
    "contacts": {
        "package": "com.example.contacts",
        "start": "contacts",
        "pages": [
            page("contacts", "Contacts", [
                el("add", BTN, desc="Add contact"),
                el("alice", BTN, "Alice"),
                el("favorites", BTN, "Favorites"),
                el("contact_list", LIST),
            ], [("add", "tap", None, "new_contact"), ("alice", "tap", None, "alice"),
                ("favorites", "tap", None, "favorites"), ("contact_list", "swipe", "up", "more_contacts")]),
            page("new_contact", "New contact", [
                el("name", EDIT),
                el("save", BTN, "Save"),
            ], [("save", "tap", None, "contact_saved")], sink="name"),
            page("contact_saved", "Contact saved", [
                el("name", EDIT),
                el("ok", BTN, "OK"),
            ], sink="name"),
            page("alice", "Alice", [
                el("call", BTN, desc="Call"),
                el("message", BTN, desc="Message"),
                el("star", BTN, desc="Favorite"),
            ], [("call", "tap", None, "calling"), ("message", "tap", None, "conversation"),
                ("star", "tap", None, "alice_starred")]),
            page("calling", "Calling Alice", [el("end", BTN, "End call")]),
            page("conversation", "Alice", [
                el("message_field", EDIT),
                el("send", BTN, desc="Send"),
            ], sink="message_field"),
            page("alice_starred", "Alice", [
                el("call", BTN, desc="Call"),
                el("message", BTN, desc="Message"),
                el("star", BTN, desc="Favorite"),
            ]),
            page("favorites", "Favorites", [el("edit", BTN, "Edit")]),
            page("more_contacts", "Contacts", [el("bob", BTN, "Bob")]),
        ],
    },
    "gallery": {
        "package": "com.example.gallery",
        "start": "albums",
        "pages": [
            page("albums", "Albums", [
                el("camera_album", BTN, "Camera"),
                el("screenshots_album", BTN, "Screenshots"),
                el("menu", BTN, desc="More"),
            ], [("camera_album", "tap", None, "camera"), ("screenshots_album", "tap", None, "screenshots")]),
            page("camera", "Camera", [
                el("photo_1", IMG, desc="Photo 1"),
                el("photo_2", IMG, desc="Photo 2"),
            ], [("photo_1", "tap", None, "photo_view"), ("photo_1", "long_press", None, "selection"),
                ("photo_2", "tap", None, "photo_view_2")]),
            page("photo_view", "Photo 1", [
                el("share", BTN, desc="Share"),
                el("edit", BTN, desc="Edit"),
                el("delete", BTN, desc="Delete"),
            ], [("share", "tap", None, "share_sheet")]),
            page("photo_view_2", "Photo 2", [el("share", BTN, desc="Share")]),
            page("share_sheet", "Share via", [
                el("messages", BTN, "Messages"),
                el("email", BTN, "Email"),
            ]),
            page("selection", "1 selected", [
                el("share_selected", BTN, desc="Share"),
                el("delete_selected", BTN, desc="Delete"),
            ]),
            page("screenshots", "Screenshots", [el("shot_1", IMG, desc="Screenshot 1")]),
        ],
    },
    "settings": {
        "package": "com.example.settings",
        "start": "main",
        "pages": [
            page("main", "Settings", [
                el("search", BTN, desc="Search"),
                el("wifi", BTN, "Network"),
                el("display", BTN, "Display"),
                el("about", BTN, "About phone"),
            ], [("wifi", "tap", None, "wifi"), ("display", "tap", None, "display"),
                ("about", "tap", None, "about")]),
            page("wifi", "Wi-Fi", [
                el("wifi_toggle", BTN, desc="Wi-Fi switch"),
                el("network_list", LIST),
            ], [("wifi_toggle", "tap", None, "wifi_on")]),
            page("wifi_on", "Wi-Fi", [
                el("wifi_toggle", BTN, desc="Wi-Fi switch"),
                el("network_list", LIST),
            ]),
            page("display", "Display", [
                el("dark_mode", BTN, desc="Theme switch"),
                el("brightness_slider", SLIDER),
            ], [("dark_mode", "tap", None, "display_dark"),
                ("brightness_slider", "swipe", "right", "display_bright")]),
            page("display_dark", "Display", [
                el("dark_mode", BTN, desc="Theme switch"),
                el("brightness_slider", SLIDER),
            ], [("brightness_slider", "swipe", "right", "display_dark_bright")]),
            page("display_bright", "Display", [
                el("dark_mode", BTN, desc="Theme switch"),
                el("brightness_slider", SLIDER),
            ]),
            page("display_dark_bright", "Display", [
                el("dark_mode", BTN, desc="Theme switch"),
                el("brightness_slider", SLIDER),
            ]),
            page("about", "About phone", [el("build", BTN, "Build number")]),
        ],
    },
}


def rid(app, name):
    return f"{APPS[app]['package']}:id/{name}"


def pages_of(app):
    return {p["id"]: p for p in APPS[app]["pages"]}


def label_of(app, page_id, name):
    names = [e["name"] for e in pages_of(app)[page_id]["elements"]]
    return names.index(name) + 1


def xml_escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def hierarchy(app, p):
    pkg = APPS[app]["package"]
    w, h = SCREEN
    lines = ['<?xml version="1.0" encoding="UTF-8" standalone="yes" ?>', '<hierarchy rotation="0">',
             f'  <node index="0" text="" resource-id="" class="android.widget.FrameLayout" package="{pkg}" '
             f'content-desc="" checkable="false" checked="false" clickable="false" enabled="true" '
             f'focusable="false" focused="false" scrollable="false" long-clickable="false" password="false" '
             f'selected="false" bounds="[0,0][{w},{h}]">']
    for i, e in enumerate(p["elements"]):
        top = 60 + i * 70
        kind = e["kind"]
        scrollable = "true" if kind in (LIST, SLIDER) else "false"
        long_click = "true" if kind == IMG else "false"
        focusable = "true" if kind == EDIT else "false"
        lines.append(
            f'    <node index="{i}" text="{xml_escape(e["text"])}" resource-id="{rid(app, e["name"])}" '
            f'class="{CLASSES[kind]}" package="{pkg}" content-desc="{xml_escape(e["desc"])}" '
            f'checkable="false" checked="false" clickable="true" enabled="true" focusable="{focusable}" '
            f'focused="false" scrollable="{scrollable}" long-clickable="{long_click}" password="false" '
            f'selected="false" bounds="[16,{top}][{w - 16},{top + 56}]" />')
    lines.append("  </node>")
    lines.append("</hierarchy>")
    return "\n".join(lines) + "\n"


def q(s):
    return json.dumps(s, ensure_ascii=False)


def write(rel, text):
    path = os.path.join(HERE, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def app_toml(app):
    a = APPS[app]
    out = ["schema_version = 1", f"app_id = {q(app)}", f"start_page = {q(a['start'])}",
           f"screen_size = [{SCREEN[0]}, {SCREEN[1]}]", ""]
    for p in a["pages"]:
        out.append("[[pages]]")
        out.append(f"page_id = {q(p['id'])}")
        out.append(f"title = {q(p['title'])}")
        if p["irrelevant"]:
            out.append("irrelevant = true")
        if p["sink"]:
            out.append(f"text_sink = {q(rid(app, p['sink']))}")
        out.append('hierarchy_xml = """')
        out.append(hierarchy(app, p) + '"""')
        for (name, action, direction, target) in p["transitions"]:
            out.append("")
            out.append("[[pages.transitions]]")
            out.append(f"element = {q(rid(app, name))}")
            out.append(f"action = {q(action)}")
            if direction:
                out.append(f"direction = {q(direction)}")
            out.append(f"target = {q(target)}")
        out.append("")
    return "\n".join(out)


def successors(app, page_id):
    return [t[3] for t in pages_of(app)[page_id]["transitions"]]


def distances_to(app, goal):
    """Forward-transition distance from every page to `goal`."""
    preds = {pid: [] for pid in pages_of(app)}
    for pid in pages_of(app):
        for nxt in successors(app, pid):
            preds[nxt].append(pid)
    dist = {goal: 0}
    todo = deque([goal])
    while todo:
        cur = todo.popleft()
        for p in preds[cur]:
            if p not in dist:
                dist[p] = dist[cur] + 1
                todo.append(p)
    return dist


def step_page(app, page_id, action, name, direction=None):
    for (n, a, d, target) in pages_of(app)[page_id]["transitions"]:
        if n == name and a == action and (d is None or d == direction):
            return target
    return page_id


# ---------------------------------------------------------------- documents

# Canonical description of (element, action kind), used by the scripted
# model when asked to document an element and by the hand-written docs.
DOCS = {
    ("mail", "compose", "tap"): "Tapping this button opens a blank message so a new email can be written.",
    ("mail", "recipient", "text"): "This field holds the recipient address of the email being written.",
    ("mail", "send", "tap"): "Tapping this button sends the email and shows the sent confirmation.",
    ("mail", "message_list", "swipe"): "Swiping up on this list scrolls to older messages, down to the oldest one.",
    ("mail", "message", "tap"): "Tapping this entry opens the message so it can be read.",
    ("mail", "reply", "tap"): "Tapping this button starts a reply to the open message.",
    ("mail", "menu", "tap"): "Tapping this icon opens the mail settings, including the signature.",
    ("mail", "signature", "tap"): "Tapping this entry opens the signature editor.",
    ("mail", "signature_field", "text"): "This field holds the signature appended to outgoing emails.",
    ("mail", "save", "tap"): "Tapping this button stores the signature.",
    ("clock", "add", "tap"): "Tapping this icon starts a new alarm.",
    ("clock", "label_field", "tap"): "This entry shows the alarm label; tapping it alone changes nothing.",
    ("clock", "hour_field", "tap"): "Tapping the hour opens the hour picker wheel.",
    ("clock", "hour_wheel", "swipe"): "Swiping up on this wheel moves the alarm hour forward to 7.",
    ("clock", "save", "tap"): "Tapping this button saves the alarm with the chosen hour.",
    ("clock", "stopwatch_tab", "tap"): "Tapping this tab shows the stopwatch.",
    ("clock", "start", "tap"): "Tapping this button starts counting.",
    ("clock", "timer_tab", "tap"): "Tapping this tab shows the countdown timer.",
    ("clock", "minutes", "text"): "This field holds the timer duration in minutes.",
    ("notes", "new_note", "tap"): "Tapping this icon opens an empty note editor.",
    ("notes", "body", "text"): "This field holds the text of the note.",
    ("notes", "save", "tap"): "Tapping this button saves the note.",
    ("notes", "groceries", "tap"): "Tapping this entry opens the Groceries note.",
    ("notes", "delete", "tap"): "Tapping this icon asks to confirm and then deletes the open note.",
    ("notes", "confirm", "tap"): "Tapping this button confirms the deletion.",
    ("notes", "trash", "tap"): "Tapping this icon opens the trash with deleted notes.",
    ("notes", "empty", "tap"): "Tapping this button permanently empties the trash.",
    ("notes", "share", "tap"): "Tapping this icon opens the share sheet for the note.",
    ("contacts", "add", "tap"): "Tapping this icon opens a form for a new contact.",
    ("contacts", "name", "text"): "This field holds the name of the contact.",
    ("contacts", "save", "tap"): "Tapping this button saves the contact.",
    ("contacts", "alice", "tap"): "Tapping this entry opens the details of Alice.",
    ("contacts", "call", "tap"): "Tapping this icon calls the contact.",
    ("contacts", "star", "tap"): "Tapping this icon marks the contact as a favorite.",
    ("contacts", "message", "tap"): "Tapping this icon opens a conversation with the contact.",
    ("gallery", "camera_album", "tap"): "Tapping this album shows the photos taken with the camera.",
    ("gallery", "photo_1", "tap"): "Tapping this photo opens it in full screen.",
    ("gallery", "photo_1", "long_press"): "Long pressing this photo selects it for sharing or deleting.",
    ("gallery", "share", "tap"): "Tapping this icon opens the share sheet for the photo.",
    ("settings", "wifi", "tap"): "Tapping this entry opens the Wi-Fi settings.",
    ("settings", "wifi_toggle", "tap"): "Tapping this switch turns Wi-Fi on.",
    ("settings", "display", "tap"): "Tapping this entry opens the display settings, including the dark theme.",
    ("settings", "dark_mode", "tap"): "Tapping this switch turns on the dark theme.",
    ("settings", "brightness_slider", "swipe"): "Swiping right on this slider raises the screen brightness.",
    ("settings", "about", "tap"): "Tapping this entry shows information about the phone.",
}

# Hand-written documents: one per element, as a person reading the app
# would write them. The gallery author did not notice the long press.
MANUAL = {
    app: {name: body for (a, name, kind), body in DOCS.items() if a == app
          and not (app == "gallery" and name == "photo_1" and kind == "long_press")}
    for app in APPS
}

# ---------------------------------------------------------------- tasks


def act(kind, name=None, direction=None, dist="medium", text=None):
    return {"kind": kind, "name": name, "direction": direction, "dist": dist, "text": text}


def call(app, page_id, a):
    k = a["kind"]
    if k == "exit":
        return "exit()"
    if k == "back":
        return "back()"
    if k == "text":
        return f"text({q(a['text'])})"
    label = label_of(app, page_id, a["name"])
    if k == "swipe":
        return f'swipe({label}, "{a["direction"]}", "{a["dist"]}")'
    return f"{k}({label})"


# Each stage: (action, summary, critical) where `critical` names the doc
# sentence the agent needs to find this action; without it the agent takes
# `wrong` instead. `wrong` is ("exit", action, summary) when the agent then
# believes it is done, or ("loop", action, summary) when it keeps repeating.
def stage(action, summary, critical=None, wrong=None):
    return {"action": action, "summary": summary, "critical": critical, "wrong": wrong}


TASKS = [
    ("mail-send", "mail", "Send an email to bob@example.com.",
     {"all": [{"page_is": "sent"}, {"buffer_contains": {"element": rid("mail", "recipient"), "text": "bob@example.com"}}]},
     [stage(act("tap", "compose"), "Opened a blank message for the email to bob."),
      stage(act("text", text="bob@example.com"), "Entered bob@example.com as the recipient."),
      stage(act("tap", "send"), "Sent the email to bob."),
      stage(act("exit"), "The email to bob has been sent.")]),
    ("mail-signature", "mail", "Set the email signature to Best, Ann.",
     {"all": [{"page_is": "signature_saved"},
              {"element_text_equals": {"element": rid("mail", "signature_field"), "text": "Best, Ann"}}]},
     [stage(act("tap", "menu"), "Opened the mail settings to find the signature.",
            critical="opens the mail settings",
            wrong=("exit", act("tap", "promo"), "Opened the offers page, which seems to hold the account options.")),
      stage(act("tap", "signature"), "Opened the signature editor."),
      stage(act("text", text="Best, Ann"), "Typed Best, Ann as the signature."),
      stage(act("tap", "save"), "Saved the new signature."),
      stage(act("exit"), "The signature is set to Best, Ann.")]),
    ("mail-oldest", "mail", "Open the oldest message in the inbox.",
     {"page_is": "message"},
     [stage(act("swipe", "message_list", "up"), "Scrolled the inbox to the oldest messages.",
            critical="scrolls to older messages",
            wrong=("loop", act("tap", "search"), "Tapped the search icon hoping to list messages by date.")),
      stage(act("tap", "message"), "Opened the oldest message."),
      stage(act("exit"), "The oldest message is open.")]),
    ("clock-alarm", "clock", "Set an alarm for 7 AM.",
     {"page_is": "alarm_saved"},
     [stage(act("tap", "add"), "Started a new alarm for 7 AM."),
      stage(act("tap", "hour_field"), "Opened the hour picker of the new alarm."),
      stage(act("swipe", "hour_wheel", "up"), "Moved the alarm hour to 7.",
            critical="moves the alarm hour forward",
            wrong=("loop", act("swipe", "hour_wheel", "down"), "Swiped the hour wheel down looking for 7.")),
      stage(act("tap", "save"), "Saved the alarm for 7 AM."),
      stage(act("exit"), "The 7 AM alarm is set.")]),
    ("clock-stopwatch", "clock", "Start the stopwatch.",
     {"page_is": "stopwatch_running"},
     [stage(act("tap", "stopwatch_tab"), "Switched to the stopwatch tab."),
      stage(act("tap", "start"), "Started the stopwatch."),
      stage(act("exit"), "The stopwatch is running.")]),
    ("clock-timer", "clock", "Start a 5 minute timer.",
     {"all": [{"page_is": "timer_running"}, {"element_text_equals": {"element": rid("clock", "minutes"), "text": "5"}}]},
     [stage(act("tap", "timer_tab"), "Switched to the timer tab."),
      stage(act("text", text="5"), "Entered 5 minutes."),
      stage(act("tap", "start"), "Started the 5 minute timer."),
      stage(act("exit"), "The 5 minute timer is running.")]),
    ("notes-create", "notes", "Create a note that says buy milk.",
     {"all": [{"page_is": "note_saved"}, {"buffer_contains": {"element": rid("notes", "body"), "text": "buy milk"}}]},
     [stage(act("tap", "new_note"), "Opened an empty note for buy milk."),
      stage(act("text", text="buy milk"), "Typed buy milk into the note."),
      stage(act("tap", "save"), "Saved the buy milk note."),
      stage(act("exit"), "The buy milk note is saved.")]),
    ("notes-delete", "notes", "Delete the Groceries note.",
     {"page_is": "note_deleted"},
     [stage(act("tap", "groceries"), "Opened the Groceries note."),
      stage(act("tap", "delete"), "Asked to delete the Groceries note.",
            critical="deletes the open note",
            wrong=("exit", act("tap", "share"), "Tapped the first icon, which should remove the Groceries note.")),
      stage(act("tap", "confirm"), "Confirmed deleting the Groceries note."),
      stage(act("exit"), "The Groceries note is deleted.")]),
    ("notes-trash", "notes", "Empty the trash.",
     {"page_is": "trash_empty"},
     [stage(act("tap", "trash"), "Opened the trash of deleted notes.",
            critical="opens the trash",
            wrong=("loop", act("tap", "search"), "Tapped the magnifier icon looking for the trash.")),
      stage(act("tap", "empty"), "Emptied the trash."),
      stage(act("exit"), "The trash is empty.")]),
    ("contacts-add", "contacts", "Add a contact named Carol.",
     {"all": [{"page_is": "contact_saved"}, {"element_text_equals": {"element": rid("contacts", "name"), "text": "Carol"}}]},
     [stage(act("tap", "add"), "Opened the new contact form for Carol."),
      stage(act("text", text="Carol"), "Typed Carol as the name."),
      stage(act("tap", "save"), "Saved the contact Carol."),
      stage(act("exit"), "Carol is saved as a contact.")]),
    ("contacts-call", "contacts", "Call Alice.",
     {"page_is": "calling"},
     [stage(act("tap", "alice"), "Opened the details of Alice to call her."),
      stage(act("tap", "call"), "Started a call to Alice."),
      stage(act("exit"), "Alice is being called.")]),
    ("contacts-star", "contacts", "Mark Alice as a favorite contact.",
     {"page_is": "alice_starred"},
     [stage(act("tap", "alice"), "Opened the details of Alice to mark her."),
      stage(act("tap", "star"), "Marked Alice as a favorite.",
            critical="marks the contact as a favorite",
            wrong=("exit", act("tap", "message"), "Tapped the middle icon, which should mark Alice.")),
      stage(act("exit"), "Alice is a favorite contact.")]),
    ("gallery-open", "gallery", "Open the first photo in the Camera album.",
     {"page_is": "photo_view"},
     [stage(act("tap", "camera_album"), "Opened the Camera album to view the first photo."),
      stage(act("tap", "photo_1"), "Opened the first photo."),
      stage(act("exit"), "The first photo is shown.")]),
    ("gallery-share", "gallery", "Share the first photo from the Camera album.",
     {"page_is": "share_sheet"},
     [stage(act("tap", "camera_album"), "Opened the Camera album to share the first photo."),
      stage(act("tap", "photo_1"), "Opened the first photo for sharing."),
      stage(act("tap", "share"), "Opened the share sheet for the photo."),
      stage(act("exit"), "The share sheet for the first photo is open.")]),
    ("gallery-select", "gallery", "Select the first photo in the Camera album.",
     {"page_is": "selection"},
     [stage(act("tap", "camera_album"), "Opened the Camera album to select the first photo."),
      stage(act("long_press", "photo_1"), "Selected the first photo.",
            critical="Long pressing this photo selects it",
            wrong=("exit", act("tap", "photo_1"), "Tapped the first photo, which should select it.")),
      stage(act("exit"), "The first photo is selected.")]),
    ("settings-wifi", "settings", "Turn on Wi-Fi.",
     {"page_is": "wifi_on"},
     [stage(act("tap", "wifi"), "Opened the network settings."),
      stage(act("tap", "wifi_toggle"), "Switched Wi-Fi on."),
      stage(act("exit"), "Wi-Fi is on.")]),
    ("settings-dark", "settings", "Turn on dark mode.",
     {"page_is": "display_dark"},
     [stage(act("tap", "display"), "Opened the display settings for the theme.",
            critical="opens the display settings, including the dark theme",
            wrong=("exit", act("tap", "about"), "Opened the phone information, where the theme should be.")),
      stage(act("tap", "dark_mode"), "Switched on the dark theme."),
      stage(act("exit"), "Dark mode is on.")]),
    ("settings-bright", "settings", "Increase the screen brightness.",
     {"page_is": "display_bright"},
     [stage(act("tap", "display"), "Opened the display settings for the brightness."),
      stage(act("swipe", "brightness_slider", "right"), "Raised the brightness.",
            critical="raises the screen brightness",
            wrong=("loop", act("swipe", "brightness_slider", "left"), "Swiped the slider left to make the screen brighter.")),
      stage(act("exit"), "The brightness is raised.")]),
]

# Exploration: one task per app, with the actions the scripted model takes.
EXPLORE = {
    "mail": ("Send an email to bob@example.com.", [
        (act("tap", "promo"), "Tapped Offers, which opened an advertisement."),
        (act("tap", "compose"), "Opened a blank message."),
        (act("text", text="bob@example.com"), "Typed the recipient address."),
        (act("tap", "send"), "Sent the email."),
        (act("exit"), "The email is sent."),
    ]),
    "clock": ("Set an alarm for 7 AM.", [
        (act("tap", "add"), "Started a new alarm."),
        (act("tap", "label_field"), "Tapped the label entry; nothing happened."),
        (act("tap", "hour_field"), "Opened the hour picker."),
        (act("swipe", "hour_wheel", "up"), "Moved the hour to 7."),
        (act("tap", "save"), "Saved the alarm."),
        (act("exit"), "The alarm is set."),
    ]),
    "notes": ("Empty the trash.", [
        (act("tap", "sponsored"), "Tapped Sponsored, which opened an advertisement."),
        (act("tap", "trash"), "Opened the trash."),
        (act("tap", "empty"), "Emptied the trash."),
        (act("exit"), "The trash is empty."),
    ]),
    "contacts": ("Add a contact named Carol.", [
        (act("tap", "add"), "Opened the new contact form."),
        (act("text", text="Carol"), "Typed the name Carol."),
        (act("tap", "save"), "Saved the contact."),
        (act("exit"), "The contact is saved."),
    ]),
    "gallery": ("Open the first photo in the Camera album.", [
        (act("tap", "camera_album"), "Opened the Camera album."),
        (act("tap", "photo_1"), "Opened the first photo."),
        (act("exit"), "The photo is open."),
    ]),
    "settings": ("Turn on dark mode and increase the brightness.", [
        (act("tap", "display"), "Opened the display settings."),
        (act("tap", "dark_mode"), "Turned on the dark theme."),
        (act("swipe", "brightness_slider", "right"), "Raised the brightness."),
        (act("exit"), "Dark mode is on and the screen is brighter."),
    ]),
}

# Demonstrations: the (element, action) pairs a person performs per app.
DEMOS = {
    "mail": [act("swipe", "message_list", "up"), act("tap", "message"), act("tap", "reply"),
             act("text", text="hi")],
    "clock": [act("tap", "add"), act("tap", "hour_field"), act("swipe", "hour_wheel", "up")],
    "notes": [act("tap", "groceries"), act("tap", "delete"), act("tap", "confirm")],
    "contacts": [act("tap", "alice"), act("tap", "star")],
    "gallery": [act("tap", "camera_album"), act("long_press", "photo_1")],
    "settings": [act("tap", "display"), act("swipe", "brightness_slider", "right")],
}


def target_name(app, page_id, a):
    if a["kind"] == "text":
        return pages_of(app)[page_id]["sink"]
    return a["name"]


def reply(observation, thought, action, summary):
    return f"Observation: {observation}\nThought: {thought}\nAction: {action}\nSummary: {summary}"


def entry(keys, text):
    return "[[entry]]\ncontains = [" + ", ".join(q(k) for k in keys) + "]\nreply = " + q(text) + "\n"


def memory_key(prev_summary):
    return "Previous steps:\nnone" if prev_summary is None else prev_summary


# ---------------------------------------------------------------- scripts


def walk(app, actions, auto_back=False):
    """Yields (page before, action) along `actions` from the start page.
    With `auto_back`, landing on an irrelevant page returns immediately, as
    the explorer does."""
    pages = pages_of(app)
    cur = APPS[app]["start"]
    for a in actions:
        yield cur, a
        if a["kind"] in ("tap", "long_press", "swipe"):
            nxt = step_page(app, cur, a["kind"], a["name"], a["direction"])
            if not (auto_back and pages[nxt]["irrelevant"]):
                cur = nxt


def explore_script(app):
    task, steps = EXPLORE[app]
    pages = pages_of(app)
    out = ["# Scripted model for exploring and documenting this app.", ""]
    irrelevant_elements = set()
    for cur, a in walk(app, [s[0] for s in steps], auto_back=True):
        if a["kind"] in ("tap", "long_press", "swipe"):
            nxt = step_page(app, cur, a["kind"], a["name"], a["direction"])
            if pages[nxt]["irrelevant"]:
                irrelevant_elements.add(a["name"])
    for name in sorted(irrelevant_elements):
        out.append(entry([f"Relevance check for element: {rid(app, name)}\n"], "irrelevant"))
    out.append(entry(["Relevance check for element: "], "relevant"))
    for (a, name, kind), body in DOCS.items():
        if a != app:
            continue
        out.append(entry([f"Element to document: {rid(app, name)}\n", f"The action performed was:\n{kind}("], body))
    stages = list(walk(app, [s[0] for s in steps], auto_back=True))
    for i in reversed(range(len(steps))):
        cur, a = stages[i]
        prev = steps[i - 1][1] if i > 0 else None
        text = reply(f"The {pages[cur]['title']} screen is shown.", "This moves the exploration forward.",
                     call(app, cur, a), steps[i][1])
        out.append(entry(["You are exploring this app", task, memory_key(prev)], text))
    return "\n".join(out)


def deploy_script(app):
    out = ["# Scripted model for carrying out the suite tasks of this app.", ""]
    pages = pages_of(app)
    for (task_id, a_id, goal, _pred, stages) in TASKS:
        if a_id != app:
            continue
        out.append(f"# {task_id}")
        path = list(walk(app, [s["action"] for s in stages]))
        for i, s in enumerate(stages):
            if s["wrong"]:
                mode, wa, ws = s["wrong"]
                cur = path[i][0]
                after = step_page(app, cur, wa["kind"], wa["name"], wa["direction"]) if wa["kind"] in ("tap", "long_press", "swipe") else cur
                if mode == "exit":
                    text = reply(f"The {pages[after]['title']} screen is shown.", "This looks finished.", "exit()",
                                 "Finished, as far as can be told.")
                else:
                    text = reply(f"The {pages[cur]['title']} screen is shown.", "Trying the same control again.",
                                 call(app, cur, wa), ws)
                out.append(entry([goal, ws], text))
        for i in reversed(range(len(stages))):
            s = stages[i]
            cur = path[i][0]
            prev = stages[i - 1]["summary"] if i > 0 else None
            right = reply(f"The {pages[cur]['title']} screen is shown.", "The next step toward the goal.",
                          call(app, cur, s["action"]), s["summary"])
            if s["critical"]:
                out.append(entry([goal, memory_key(prev), s["critical"]], right))
                _mode, wa, ws = s["wrong"]
                wrong = reply(f"The {pages[cur]['title']} screen is shown.", "Guessing which control does this.",
                              call(app, cur, wa), ws)
                out.append(entry([goal, memory_key(prev)], wrong))
            else:
                out.append(entry([goal, memory_key(prev)], right))
        out.append("")
    return "\n".join(out)


def demo_events(app):
    events = []
    for cur, a in walk(app, DEMOS[app]):
        ev = {"kind": a["kind"]}
        if a["kind"] in ("tap", "long_press", "swipe"):
            ev["label"] = label_of(app, cur, a["name"])
            ev["identifier"] = rid(app, a["name"])
        if a["kind"] == "swipe":
            ev["direction"] = a["direction"]
            ev["dist"] = a["dist"]
        if a["kind"] == "text":
            ev["text"] = a["text"]
        events.append(ev)
    return json.dumps(events, indent=2) + "\n"


def manual_docs(app):
    out = ["# Hand-written element documents.", ""]
    for name, body in MANUAL[app].items():
        out.append("[[doc]]")
        out.append(f"element_id = {q(rid(app, name))}")
        out.append(f"body = {q(body)}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- oracle


def coverage(config, app):
    """Doc body per element id available under `config`."""
    docs = {}
    if config == "none":
        return docs
    if config == "manual":
        return {rid(app, n): b for n, b in MANUAL[app].items()}
    if config == "auto":
        task, steps = EXPLORE[app]
        acts = [s[0] for s in steps]
    else:
        acts = DEMOS[app]
    pages = pages_of(app)
    for cur, a in walk(app, acts, auto_back=(config == "auto")):
        if a["kind"] in ("back", "exit"):
            continue
        name = target_name(app, cur, a)
        if a["kind"] in ("tap", "long_press", "swipe"):
            nxt = step_page(app, cur, a["kind"], a["name"], a["direction"])
            if config == "auto" and pages[nxt]["irrelevant"]:
                continue
            if config == "auto" and nxt == cur:
                continue
        key = (app, name, a["kind"])
        assert rid(app, name) not in docs, f"{key} documented twice"
        docs[rid(app, name)] = DOCS[key]
    return docs


def reward_map(app, goal):
    dist = distances_to(app, goal)
    top = dist[APPS[app]["start"]] + 1
    return {p: top - d for p, d in dist.items() if top - d > 0}


def expected(config):
    results = []
    for (task_id, app, goal, _pred, stages) in TASKS:
        docs = coverage(config, app)
        rmap = reward_map(app, goal_page(stages, app))
        path = list(walk(app, [s["action"] for s in stages]))
        outcome = None
        for i, s in enumerate(stages):
            if s["critical"] and not any(s["critical"] in body for body in docs.values()):
                mode, wa, _ = s["wrong"]
                cur = path[i][0]
                if mode == "exit":
                    final = step_page(app, cur, wa["kind"], wa["name"], wa["direction"])
                    outcome = (False, i + 2, final)
                else:
                    outcome = (False, MAX_STEPS, cur)
                break
        if outcome is None:
            outcome = (True, len(stages), goal_page(stages, app))
        ok, steps, final = outcome
        results.append((task_id, ok, steps, rmap.get(final, 0)))
    return results


def goal_page(stages, app):
    path = list(walk(app, [s["action"] for s in stages]))
    return path[-1][0]


# ---------------------------------------------------------------- suite


def toml_inline(value):
    if isinstance(value, dict):
        return "{ " + ", ".join(f"{k} = {toml_inline(v)}" for k, v in value.items()) + " }"
    if isinstance(value, list):
        return "[" + ", ".join(toml_inline(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return q(value)


def suite_toml():
    out = ["# Reference benchmark: six simulated apps, eighteen tasks.", "schema_version = 1",
           'suite_id = "reference"', ""]
    for app in APPS:
        task, _ = EXPLORE[app]
        out += ["[[apps]]", f"app_id = {q(app)}", f"spec = {q(f'apps/{app}.toml')}",
                f"explore_task = {q(task)}", f"explore_script = {q(f'scripts/{app}.explore.script')}",
                f"deploy_script = {q(f'scripts/{app}.deploy.script')}", f"demo = {q(f'demos/{app}.demo.json')}",
                f"manual_docs = {q(f'manual/{app}.docs.toml')}", ""]
    for (task_id, app, goal, pred, stages) in TASKS:
        rmap = reward_map(app, goal_page(stages, app))
        out += ["[[tasks]]", f"task_id = {q(task_id)}", f"app_id = {q(app)}", f"goal_text = {q(goal)}",
                f"max_steps = {MAX_STEPS}", f"success = {toml_inline(pred)}",
                "reward_map = " + toml_inline(dict(sorted(rmap.items()))), ""]
    for config in ("none", "auto", "demo", "manual"):
        res = expected(config)
        succ = [r for r in res if r[1]]
        out += ["[[expected]]", f"config = {q(config)}", f"tasks = {len(res)}", f"successes = {len(succ)}",
                f"reward_sum = {sum(r[3] for r in res)}", f"success_step_sum = {sum(r[2] for r in succ)}",
                f"succeeded = {toml_inline([r[0] for r in succ])}", ""]
    return "\n".join(out)


def main():
    for app in APPS:
        write(f"apps/{app}.toml", app_toml(app))
        write(f"scripts/{app}.explore.script", explore_script(app))
        write(f"scripts/{app}.deploy.script", deploy_script(app))
        write(f"demos/{app}.demo.json", demo_events(app))
        write(f"manual/{app}.docs.toml", manual_docs(app))
    write("suite.toml", suite_toml())
    for config in ("none", "auto", "demo", "manual"):
        res = expected(config)
        n = sum(1 for r in res if r[1])
        print(f"{config:7} SR {Fraction(n, len(res))} = {n / len(res):.3f}  reward {sum(r[3] for r in res)}")


if __name__ == "__main__":
    main()
